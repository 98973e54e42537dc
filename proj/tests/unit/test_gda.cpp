// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <numbers>

#include "oracles.hpp"

using namespace oodk;

namespace {

// Two classes in the plane: {(0,0), (2,0)} and {(0,2), (0,4)}.
// Means (1,0) and (0,3); pooled covariance diag(0.5, 0.5); priors ½, ½.
ClassGaussianModel hand_model() {
  const std::vector<FeatureVector> x{{0, 0}, {2, 0}, {0, 2}, {0, 4}};
  const std::vector<int> y{0, 0, 1, 1};
  return ClassGaussianModel::fit(x, y, 2);
}

ClassGaussianModel random_model(int k, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureVector> xs;
  std::vector<int> ys;
  for (int c = 0; c < k; ++c) {
    Vector mu(static_cast<std::size_t>(d));
    for (double& v : mu) v = 4.0 * rng.normal();
    for (int i = 0; i < 40; ++i) {
      Vector x = mu;
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += (1.0 + 0.5 * static_cast<double>(j)) * rng.normal();
      if (d > 1) x[1] += 0.5 * x[0];
      xs.push_back(x);
      ys.push_back(c);
    }
  }
  return ClassGaussianModel::fit(xs, ys, k);
}

}  // namespace

TEST_CASE("fit matches the closed-form hand example") {
  const auto m = hand_model();
  const double eps = 1e-6 * 1.0 / 2.0;
  CHECK(m.epsilon() == Catch::Approx(eps).epsilon(1e-12));
  CHECK(std::abs(m.means()(0, 0) - 1.0) <= 1e-12);
  CHECK(std::abs(m.means()(0, 1) - 0.0) <= 1e-12);
  CHECK(std::abs(m.means()(1, 0) - 0.0) <= 1e-12);
  CHECK(std::abs(m.means()(1, 1) - 3.0) <= 1e-12);
  CHECK(std::abs(m.covariance()(0, 0) - 0.5) <= 1e-12);
  CHECK(std::abs(m.covariance()(1, 1) - 0.5) <= 1e-12);
  CHECK(std::abs(m.covariance()(0, 1)) <= 1e-12);
  CHECK(std::abs(m.priors()[0] - 0.5) <= 1e-12);

  const double a = 1.0 / (0.5 + eps);  // precision on the diagonal
  const FeatureVector x{1.0, 1.0};
  CHECK(std::abs(m.mahalanobis_sq(x, 0) - a) <= 1e-12);
  CHECK(std::abs(m.mahalanobis_sq(x, 1) - 5.0 * a) <= 1e-12);
  const double logd = -std::log(2 * std::numbers::pi) + std::log(a) - 0.5 * a;
  CHECK(std::abs(m.log_density(x, 0) - logd) <= 1e-12);
  // −μᵀA h + ½μᵀAμ − log β
  CHECK(std::abs(m.gda_energy(x, 0) - (-a + 0.5 * a + std::log(2.0))) <= 1e-12);
  CHECK(std::abs(m.gda_energy(x, 1) - (-3 * a + 4.5 * a + std::log(2.0))) <= 1e-12);
}

TEST_CASE("fit validates its inputs") {
  const std::vector<FeatureVector> x{{0, 0}, {1, 1}, {2, 2}};
  try {
    ClassGaussianModel::fit(x, std::vector<int>{0, 0, 1}, 2);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::estimation);
  }
  CHECK_THROWS_AS(ClassGaussianModel::fit(x, std::vector<int>{0, 0, 2}, 2), Error);
  CHECK_THROWS_AS(ClassGaussianModel::fit(x, std::vector<int>{0, 0}, 1), Error);
  const std::vector<FeatureVector> ragged{{0, 0}, {1}};
  CHECK_THROWS_AS(ClassGaussianModel::fit(ragged, std::vector<int>{0, 0}, 1), Error);
}

TEST_CASE("from_parameters rejects asymmetric covariance and bad priors") {
  Matrix means(1, 2), cov = Matrix::identity(2);
  cov(0, 1) = 0.1;
  CHECK_THROWS_AS(ClassGaussianModel::from_parameters(means, cov, {1.0}, 0.0), Error);
  CHECK_THROWS_AS(ClassGaussianModel::from_parameters(means, Matrix::identity(2), {0.9}, 0.0), Error);
  Matrix two(2, 2);
  const auto m = ClassGaussianModel::from_parameters(two, Matrix::identity(2), {1.0, 0.0}, 0.0);
  try {
    m.gda_energy(FeatureVector{0, 0}, 1);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::numerical);
  }
}

TEST_CASE("mahalanobis distance agrees with an explicit inverse") {
  const auto m = random_model(3, 5, 21);
  const auto inv = oracle::inverse(m.regularized_covariance());
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = oracle::random_vector(5, gen, -10, 10);
    for (int k = 0; k < 3; ++k) {
      Vector dev(5);
      for (std::size_t j = 0; j < 5; ++j) dev[j] = x[j] - m.mean(k)[j];
      const double ref = static_cast<double>(oracle::quad_form(inv, dev, dev));
      const double got = m.mahalanobis_sq(x, k);
      CHECK(got >= 0.0);
      CHECK(got == Catch::Approx(ref).epsilon(1e-10));
    }
  }
}

TEST_CASE("posterior equals Bayes rule over class densities") {
  const auto m = random_model(4, 3, 22);
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector h = oracle::random_vector(3, gen, -8, 8);
    const Vector p = m.posterior(h);
    Vector logj(4);
    for (int k = 0; k < 4; ++k) logj[static_cast<std::size_t>(k)] = std::log(m.priors()[static_cast<std::size_t>(k)]) + m.log_density(h, k);
    const double lse = ClassGaussianModel::log_sum_exp(logj);
    double total = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(p[k] == Catch::Approx(std::exp(logj[k] - lse)).epsilon(1e-9).margin(1e-12));
      total += p[k];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("posterior argmax coincides with energy argmin") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = random_model(2 + trial % 4, 1 + trial % 5, 1000 + static_cast<std::uint64_t>(trial));
    const Vector h = oracle::random_vector(static_cast<std::size_t>(m.dim()), gen, -10, 10);
    const Vector p = m.posterior(h);
    Vector e(static_cast<std::size_t>(m.k_classes()));
    for (int k = 0; k < m.k_classes(); ++k) e[static_cast<std::size_t>(k)] = m.gda_energy(h, k);
    REQUIRE(std::max_element(p.begin(), p.end()) - p.begin() == std::min_element(e.begin(), e.end()) - e.begin());
  }
}

TEST_CASE("log-sum-exp is shift invariant") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vector v = oracle::random_vector(1 + trial % 10, gen, -50, 50);
    const double c = std::uniform_real_distribution<double>(-100, 100)(gen);
    Vector shifted = v;
    for (double& x : shifted) x += c;
    REQUIRE(std::abs(ClassGaussianModel::log_sum_exp(shifted) - (ClassGaussianModel::log_sum_exp(v) + c)) <= 1e-12 * std::max(1.0, std::abs(c) + 50));
  }
}

TEST_CASE("the class mean maximizes the fitted density over training points") {
  int hits = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Rng rng(static_cast<std::uint64_t>(t));
    std::vector<FeatureVector> xs;
    std::vector<int> ys;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 30; ++i) {
        FeatureVector x{20.0 * c + rng.normal(), -20.0 * c + rng.normal(), rng.normal()};
        xs.push_back(x);
        ys.push_back(c);
      }
    const auto m = ClassGaussianModel::fit(xs, ys, 3);
    bool ok = true;
    for (int c = 0; c < 3; ++c) {
      const double at_mean = m.log_density(m.mean(c), c);
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (ys[i] == c && m.log_density(xs[i], c) > at_mean) ok = false;
    }
    hits += ok;
  }
  CHECK(hits >= trials * 99 / 100);
}

TEST_CASE("zero noise sample is the mean; draws have the fitted moments") {
  const auto m = random_model(2, 3, 23);
  const FeatureVector at_zero = m.sample_from_noise(1, Vector(3, 0.0));
  for (std::size_t j = 0; j < 3; ++j) CHECK(at_zero[j] == m.mean(1)[j]);

  Rng rng(99);
  const int n = 100000;
  Vector mean(3, 0.0);
  Matrix second(3, 3);
  std::vector<FeatureVector> draws;
  for (int i = 0; i < n; ++i) draws.push_back(m.sample(1, rng));
  for (const auto& x : draws)
    for (std::size_t j = 0; j < 3; ++j) mean[j] += x[j] / n;
  for (const auto& x : draws)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) second(a, b) += (x[a] - mean[a]) * (x[b] - mean[b]) / n;
  const Matrix s = m.regularized_covariance();
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(mean[j] - m.mean(1)[j]) <= 4.0 * std::sqrt(s(j, j) / n));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const double sd = std::sqrt((s(a, a) * s(b, b) + s(a, b) * s(a, b)) / n);
      CHECK(std::abs(second(a, b) - s(a, b)) <= 5.0 * sd);
    }

  Rng r1(5), r2(5);
  for (int i = 0; i < 10; ++i) CHECK(m.sample(0, r1) == m.sample(0, r2));
}

TEST_CASE("energy gap bound holds strictly for tail samples") {
  const auto m = random_model(3, 4, 24);
  TailSamplerConfig cfg{10000, 10000, 1};
  Rng rng(77);
  for (int k = 0; k < 3; ++k) {
    const auto tails = sample_tails(m, k, cfg, rng);
    std::size_t held = 0, lower = 0;
    for (const auto& t : tails) {
      const auto r = m.check_energy_gap_bound(t.vector, k);
      held += r.gap_bound_holds;
      lower += r.lower_bound_holds;
    }
    CHECK(held == tails.size());
    CHECK(lower == tails.size());
  }
  const auto at_mean = m.check_energy_gap_bound(m.mean(0), 0);
  CHECK(at_mean.boundary_case);
  CHECK_FALSE(at_mean.gap_bound_holds);
}

TEST_CASE("GDA1 files round trip bitwise") {
  const auto m = random_model(3, 4, 25);
  const auto bytes = m.serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GDA1");
  CHECK(bytes.size() == 4 + 8 + 8 * (3 * 4 + 16 + 3 + 1));
  const auto back = ClassGaussianModel::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.means() == m.means());
  CHECK(back.covariance() == m.covariance());
  CHECK(back.priors() == m.priors());

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  try {
    ClassGaussianModel::deserialize(truncated);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(ClassGaussianModel::deserialize(bad_magic), Error);
}
