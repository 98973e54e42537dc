// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "oodk/common.hpp"
#include "oodk/gda.hpp"
#include "oodk/rng.hpp"

namespace oodk {

struct TailSamplerConfig {
  int draws_n_total = 10000;
  int rank_n = 64;
  int per_class_batch = 1;

  void validate() const {
    require(rank_n >= 1 && rank_n <= draws_n_total, ErrorCode::input,
            "tails: need 1 <= rank_n <= draws_n_total");
    require(per_class_batch >= 1 && per_class_batch <= rank_n, ErrorCode::input,
            "tails: need 1 <= per_class_batch <= rank_n");
  }
};

struct TailSample {
  FeatureVector vector;
  int class_id = 0;
  double density_log = 0.0;
  /// The rank_n-th smallest log-density among the draws: the operational
  /// low-likelihood threshold.
  double implied_delta_log = 0.0;
};

/// Draws N points from class k's Gaussian and keeps the n with the lowest
/// log-density, ascending. Ties go to the earlier draw.
inline std::vector<TailSample> sample_tails(const ClassGaussianModel& model, int k,
                                            const TailSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  require(k >= 0 && k < model.k_classes(), ErrorCode::input,
          "tails: invalid class " + std::to_string(k));
  const auto n_total = static_cast<std::size_t>(cfg.draws_n_total);
  const auto n_keep = static_cast<std::size_t>(cfg.rank_n);

  std::vector<FeatureVector> draws(n_total);
  std::vector<double> logd(n_total);
  for (std::size_t i = 0; i < n_total; ++i) {
    draws[i] = model.sample(k, rng);
    logd[i] = model.log_density(draws[i], k);
  }
  std::vector<std::size_t> order(n_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return logd[a] < logd[b] || (logd[a] == logd[b] && a < b);
                    });

  const double delta = logd[order[n_keep - 1]];
  std::vector<TailSample> out;
  out.reserve(n_keep);
  for (std::size_t r = 0; r < n_keep; ++r) {
    const std::size_t i = order[r];
    out.push_back(TailSample{std::move(draws[i]), k, logd[i], delta});
  }
  return out;
}

/// Same mechanism as sample_tails; the trainer routes these into the outlier
/// term instead of the inlier term.
inline std::vector<TailSample> sample_boundary_outliers(const ClassGaussianModel& model, int k,
                                                        const TailSamplerConfig& cfg, Rng& rng) {
  return sample_tails(model, k, cfg, rng);
}

/// Uniformly picks `count` distinct entries of a tail set.
inline std::vector<const TailSample*> pick_tails(const std::vector<TailSample>& pool,
                                                 std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<const TailSample*> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(&pool[idx[i]]);
  return out;
}

}  // namespace oodk
