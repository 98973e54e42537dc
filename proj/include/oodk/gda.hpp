// SPDX-License-Identifier: Apache-2.0
//
// Class-conditional Gaussians with a tied covariance over classifier latents:
// pooled maximum-likelihood fit, densities, the induced linear-softmax
// posterior and its per-class energies, and sampling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "oodk/binary_io.hpp"
#include "oodk/common.hpp"
#include "oodk/linalg.hpp"
#include "oodk/rng.hpp"

namespace oodk {

/// Numerical evaluation of the mean-versus-tail energy relations for one
/// class. `gap` is E(μ_k, k) − E(t, k); `gap_bound` is ½(t−μ_k)ᵀΣ⁻¹(t+μ_k).
struct EnergyGapReport {
  double gap = 0.0;
  double gap_bound = 0.0;
  bool gap_bound_holds = false;
  /// −log Σ_k exp(−E(t, k)): free energy of the posterior logits at t.
  double free_energy = 0.0;
  /// −log Σ_k exp(−E(μ_k, k) + ½(t−μ_k)ᵀΣ⁻¹(t+μ_k)).
  double free_energy_lower_bound = 0.0;
  bool lower_bound_holds = false;
  /// t coincides with μ_k, so the strict inequality cannot hold.
  bool boundary_case = false;
};

class ClassGaussianModel {
 public:
  static constexpr double kDefaultEpsilonScale = 1e-6;

  /// Pooled MLE: per-class sample means, covariance of deviations from the
  /// class means divided by the total count, empirical priors. The diagonal
  /// is regularized by epsilon_scale · trace(Σ̂)/d before factorization.
  static ClassGaussianModel fit(std::span<const FeatureVector> embeddings,
                                std::span<const int> labels, int k_classes,
                                double epsilon_scale = kDefaultEpsilonScale) {
    require(k_classes >= 1, ErrorCode::input, "fit: need at least one class");
    require(embeddings.size() == labels.size(), ErrorCode::input,
            "fit: embeddings and labels differ in length");
    require(!embeddings.empty(), ErrorCode::estimation, "fit: no samples");
    const std::size_t d = embeddings.front().size();
    require(d >= 1, ErrorCode::input, "fit: zero-dimensional embeddings");
    const auto k = static_cast<std::size_t>(k_classes);

    std::vector<std::size_t> counts(k, 0);
    Matrix means(k, d);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      const auto& x = embeddings[i];
      require(x.size() == d, ErrorCode::input, "fit: inconsistent embedding dimension");
      require(all_finite(x), ErrorCode::input, "fit: non-finite embedding value");
      require(labels[i] >= 0 && labels[i] < k_classes, ErrorCode::input,
              "fit: label out of range");
      const auto c = static_cast<std::size_t>(labels[i]);
      ++counts[c];
      auto row = means.row(c);
      for (std::size_t j = 0; j < d; ++j) row[j] += x[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      require(counts[c] > 0, ErrorCode::estimation,
              "fit: class " + std::to_string(c) + " is empty");
      require(counts[c] >= 2, ErrorCode::estimation,
              "fit: class " + std::to_string(c) + " has fewer than 2 samples");
      for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
    }

    Matrix cov(d, d);
    Vector dev(d);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      const auto mu = means.row(static_cast<std::size_t>(labels[i]));
      for (std::size_t j = 0; j < d; ++j) dev[j] = embeddings[i][j] - mu[j];
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) cov(r, c) += dev[r] * dev[c];
    }
    const double m = static_cast<double>(embeddings.size());
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r; c < d; ++c) {
        cov(r, c) /= m;
        cov(c, r) = cov(r, c);
      }

    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) trace += cov(j, j);
    const double epsilon = epsilon_scale * trace / static_cast<double>(d);

    Vector priors(k);
    for (std::size_t c = 0; c < k; ++c) priors[c] = static_cast<double>(counts[c]) / m;

    return from_parameters(std::move(means), std::move(cov), std::move(priors), epsilon);
  }

  /// Builds a model from explicit parameters and factorizes Σ + εI.
  static ClassGaussianModel from_parameters(Matrix means, Matrix covariance, Vector priors,
                                            double epsilon) {
    const std::size_t k = means.rows();
    const std::size_t d = means.cols();
    require(k >= 1 && d >= 1, ErrorCode::input, "model: empty means");
    require(covariance.rows() == d && covariance.cols() == d, ErrorCode::input,
            "model: covariance shape does not match mean dimension");
    require(priors.size() == k, ErrorCode::input, "model: priors length differs from K");
    require(all_finite(means.data()) && all_finite(covariance.data()) && std::isfinite(epsilon),
            ErrorCode::input, "model: non-finite parameter");
    require(epsilon >= 0.0, ErrorCode::input, "model: negative epsilon");
    double prior_sum = 0.0;
    for (double p : priors) {
      require(p >= 0.0 && std::isfinite(p), ErrorCode::input, "model: invalid prior");
      prior_sum += p;
    }
    require(std::abs(prior_sum - 1.0) <= 1e-12, ErrorCode::input, "model: priors do not sum to 1");
    const double scale = std::max(1.0, norm_inf(covariance));
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r + 1; c < d; ++c)
        require(std::abs(covariance(r, c) - covariance(c, r)) <= 1e-12 * scale, ErrorCode::input,
                "model: covariance is not symmetric");

    ClassGaussianModel model;
    model.means_ = std::move(means);
    model.covariance_ = std::move(covariance);
    model.priors_ = std::move(priors);
    model.epsilon_ = epsilon;
    model.chol_ = cholesky(model.regularized_covariance());
    model.log_det_chol_ = 0.0;
    for (std::size_t j = 0; j < d; ++j) model.log_det_chol_ += std::log(model.chol_(j, j));

    model.precision_means_ = Matrix(k, d);
    model.mean_quads_.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const Vector a_mu = cholesky_solve(model.chol_, model.means_.row(c));
      std::copy(a_mu.begin(), a_mu.end(), model.precision_means_.row(c).begin());
      model.mean_quads_[c] = dot(model.means_.row(c), a_mu);
    }
    return model;
  }

  int k_classes() const { return static_cast<int>(means_.rows()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const Matrix& means() const { return means_; }
  std::span<const double> mean(int k) const { return means_.row(checked_class(k)); }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& chol() const { return chol_; }
  const Vector& priors() const { return priors_; }
  double epsilon() const { return epsilon_; }

  Matrix regularized_covariance() const {
    Matrix a = covariance_;
    for (std::size_t j = 0; j < a.rows(); ++j) a(j, j) += epsilon_;
    return a;
  }

  /// (x−μ_k)ᵀ(Σ+εI)⁻¹(x−μ_k), by one triangular solve.
  double mahalanobis_sq(std::span<const double> x, int k) const {
    check_dim(x);
    const auto mu = mean(k);
    Vector dev(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) dev[j] = x[j] - mu[j];
    const Vector y = forward_substitute(chol_, dev);
    return dot(y, y);
  }

  double log_density(std::span<const double> x, int k) const {
    const double d = static_cast<double>(dim());
    return -0.5 * d * std::log(2.0 * std::numbers::pi) - log_det_chol_ -
           0.5 * mahalanobis_sq(x, k);
  }

  /// −μ_kᵀΣ⁻¹h + ½μ_kᵀΣ⁻¹μ_k − log β_k.
  double gda_energy(std::span<const double> h, int k) const {
    check_dim(h);
    const auto c = checked_class(k);
    require(priors_[c] > 0.0, ErrorCode::numerical,
            "gda_energy: class " + std::to_string(k) + " has zero prior");
    return -dot(precision_means_.row(c), h) + 0.5 * mean_quads_[c] - std::log(priors_[c]);
  }

  /// Posterior class probabilities: softmax of the negated class energies.
  Vector posterior(std::span<const double> h) const {
    check_dim(h);
    const std::size_t k = means_.rows();
    Vector logits(k);
    for (std::size_t c = 0; c < k; ++c)
      logits[c] = dot(precision_means_.row(c), h) - 0.5 * mean_quads_[c] + std::log(priors_[c]);
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& v : logits) {
      v = std::exp(v - top);
      total += v;
    }
    for (double& v : logits) v /= total;
    return logits;
  }

  /// μ_k + L z for a caller-supplied standard-normal vector z.
  FeatureVector sample_from_noise(int k, std::span<const double> z) const {
    check_dim(z);
    const auto mu = mean(k);
    const std::size_t d = z.size();
    FeatureVector x(mu.begin(), mu.end());
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= i; ++j) s += chol_(i, j) * z[j];
      x[i] += s;
    }
    return x;
  }

  FeatureVector sample(int k, Rng& rng) const {
    Vector z(static_cast<std::size_t>(dim()));
    rng.fill_normal(z);
    return sample_from_noise(k, z);
  }

  EnergyGapReport check_energy_gap_bound(std::span<const double> t, int k) const {
    check_dim(t);
    const auto mu = mean(k);
    EnergyGapReport report;
    report.boundary_case = std::equal(t.begin(), t.end(), mu.begin());

    Vector diff(t.size()), sum(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
      diff[j] = t[j] - mu[j];
      sum[j] = t[j] + mu[j];
    }
    const Vector a_sum = cholesky_solve(chol_, sum);
    report.gap = gda_energy(mu, k) - gda_energy(t, k);
    report.gap_bound = 0.5 * dot(diff, a_sum);
    report.gap_bound_holds = !report.boundary_case && report.gap < report.gap_bound;

    const std::size_t kk = means_.rows();
    Vector at_t(kk), shifted(kk);
    for (std::size_t q = 0; q < kk; ++q) {
      const int qi = static_cast<int>(q);
      at_t[q] = -gda_energy(t, qi);
      const auto mu_q = means_.row(q);
      Vector d_q(t.size()), s_q(t.size());
      for (std::size_t j = 0; j < t.size(); ++j) {
        d_q[j] = t[j] - mu_q[j];
        s_q[j] = t[j] + mu_q[j];
      }
      shifted[q] = -gda_energy(mu_q, qi) + 0.5 * dot(d_q, cholesky_solve(chol_, s_q));
    }
    report.free_energy = -log_sum_exp(at_t);
    report.free_energy_lower_bound = -log_sum_exp(shifted);
    report.lower_bound_holds = report.free_energy > report.free_energy_lower_bound;
    return report;
  }

  /// "GDA1" | u32 K | u32 d | f64 means | f64 covariance | f64 priors | f64 epsilon.
  std::vector<std::uint8_t> serialize() const {
    io::ByteWriter w;
    w.magic("GDA1");
    w.u32(static_cast<std::uint32_t>(means_.rows()));
    w.u32(static_cast<std::uint32_t>(means_.cols()));
    w.f64s(means_.data());
    w.f64s(covariance_.data());
    w.f64s(priors_);
    w.f64(epsilon_);
    return w.bytes();
  }

  static ClassGaussianModel deserialize(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes));
    r.expect_magic("GDA1");
    const std::size_t k = r.u32();
    const std::size_t d = r.u32();
    require(k >= 1 && d >= 1, ErrorCode::format, "GDA1: empty model");
    r.need(8 * (k * d + d * d + k + 1));
    Matrix means(k, d), cov(d, d);
    means.data() = r.f64s(k * d);
    cov.data() = r.f64s(d * d);
    Vector priors = r.f64s(k);
    const double epsilon = r.f64();
    require(r.at_end(), ErrorCode::format, "GDA1: trailing bytes");
    return from_parameters(std::move(means), std::move(cov), std::move(priors), epsilon);
  }

  void save(const std::string& path) const { io::write_file(path, serialize()); }
  static ClassGaussianModel load(const std::string& path) {
    return deserialize(io::read_file(path));
  }

  static double log_sum_exp(std::span<const double> v) {
    const double top = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - top);
    return top + std::log(s);
  }

 private:
  ClassGaussianModel() = default;

  std::size_t checked_class(int k) const {
    require(k >= 0 && k < k_classes(), ErrorCode::input,
            "class id " + std::to_string(k) + " out of range");
    return static_cast<std::size_t>(k);
  }

  void check_dim(std::span<const double> x) const {
    require(x.size() == means_.cols(), ErrorCode::input,
            "dimension mismatch: got " + std::to_string(x.size()) + ", model has " +
                std::to_string(means_.cols()));
  }

  Matrix means_;
  Matrix covariance_;
  Matrix chol_;
  Vector priors_;
  double epsilon_ = 0.0;
  double log_det_chol_ = 0.0;
  Matrix precision_means_;
  Vector mean_quads_;
};

}  // namespace oodk
