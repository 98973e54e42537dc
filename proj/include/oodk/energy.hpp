// SPDX-License-Identifier: Apache-2.0
//
// Free-energy scoring. Scores handed to users are negative energies, so that
// in-distribution inputs score higher.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "oodk/common.hpp"
#include "oodk/dense_layer.hpp"

namespace oodk {

struct EnergyScore {
  double value = 0.0;
  double temperature = 1.0;

  double negative() const { return -value; }
};

/// E = −T log Σ_k exp(f_k / T), evaluated around the max logit.
inline EnergyScore free_energy(std::span<const double> logits, double temperature = 1.0) {
  require(!logits.empty(), ErrorCode::input, "free_energy: empty logits");
  require(temperature > 0.0 && std::isfinite(temperature), ErrorCode::input,
          "free_energy: temperature must be positive");
  require(all_finite(logits), ErrorCode::input, "free_energy: non-finite logit");
  const double top = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double f : logits) s += std::exp((f - top) / temperature);
  return {-temperature * (top / temperature + std::log(s)), temperature};
}

/// ∂E/∂f_k = −softmax(f/T)_k.
inline Vector free_energy_gradient(std::span<const double> logits, double temperature = 1.0) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Vector g(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    g[k] = std::exp((logits[k] - top) / temperature);
    s += g[k];
  }
  for (double& v : g) v = -v / s;
  return g;
}

/// Free energy of the classifier head applied to a latent vector.
inline EnergyScore latent_energy(const DenseLayer& head, std::span<const double> latent,
                                 double temperature = 1.0) {
  require(latent.size() == head.in_dim(), ErrorCode::input, "latent_energy: dimension mismatch");
  return free_energy(head.apply(latent), temperature);
}

/// ∂E/∂t = Wᵀ ∂E/∂f.
inline Vector latent_energy_gradient(const DenseLayer& head, std::span<const double> latent,
                                     double temperature = 1.0) {
  require(latent.size() == head.in_dim(), ErrorCode::input, "latent_energy: dimension mismatch");
  const Vector g_logits = free_energy_gradient(head.apply(latent), temperature);
  Vector g(latent.size(), 0.0);
  for (std::size_t o = 0; o < head.out_dim(); ++o) {
    const auto w = head.weight.row(o);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += g_logits[o] * w[j];
  }
  return g;
}

struct DetectorConfig {
  double tau = 0.0;

  /// Accepts everything as inlier.
  static DetectorConfig accept_all() { return {-std::numeric_limits<double>::infinity()}; }
};

enum class Decision { inlier, outlier };

/// Outlier iff −E ≤ τ.
inline Decision detect(double negative_energy, const DetectorConfig& cfg) {
  return negative_energy <= cfg.tau ? Decision::outlier : Decision::inlier;
}

}  // namespace oodk
