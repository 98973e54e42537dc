// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "oodk/data_io.hpp"
#include "oodk/metrics.hpp"
#include "oodk/trainer.hpp"

namespace oodk {

struct SplitScores {
  Vector id;
  Vector semantic;
  Vector modality;
};

struct BenchmarkResult {
  TrainMode mode = TrainMode::ours;
  std::uint64_t seed = 0;
  EvalReport semantic;
  EvalReport modality;
  double balanced_accuracy = 0.0;
  SplitScores scores;
  TrainResult training;
};

/// Generates the synthetic benchmark for `seed`, trains `mode` on it and
/// evaluates held-out ID against both shift splits.
inline BenchmarkResult run_benchmark(const RunConfig& base, TrainMode mode, std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.data.seed = seed;
  cfg.train.seed = seed;
  cfg.train.mode = mode;
  Rng data_rng(cfg.data.seed);
  const DatasetBundle bundle = gen_synthetic(cfg.data, data_rng);

  BenchmarkResult r;
  r.mode = mode;
  r.seed = seed;
  r.training = train(bundle.train, cfg.train, cfg.nda, cfg.tails);
  const auto& p = r.training.params;
  const double t = cfg.train.temperature;
  r.scores.id = score_inputs(p, bundle.test_id.inputs, t);
  r.scores.semantic = score_inputs(p, bundle.test_semantic.inputs, t);
  r.scores.modality = score_inputs(p, bundle.test_modality.inputs, t);
  r.semantic = evaluate(r.scores.id, r.scores.semantic);
  r.modality = evaluate(r.scores.id, r.scores.modality);
  r.balanced_accuracy = balanced_accuracy(predict(p, bundle.test_id.inputs), bundle.test_id.labels, bundle.test_id.k_classes);
  return r;
}

}  // namespace oodk
