// SPDX-License-Identifier: Apache-2.0
//
// Central-difference check of the training loss gradient at sampled
// parameter coordinates, skipping coordinates whose stencil crosses a ReLU
// or hinge kink.
#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"

namespace gradcheck {

using namespace oodk;

// Everything that can put a coordinate on a kink: ReLU signs of every input
// point and the activity of every hinge.
inline std::vector<bool> kink_signature(const ModelParams& p, const std::vector<Vector>& xs, const EnergyBatch& in,
                                 const EnergyBatch& out, const LossWeights& w) {
  std::vector<bool> sig;
  auto relu_signs = [&](const Vector& x) {
    const auto t = forward_trace(p, x);
    for (std::size_t l = 0; l + 1 < t.pre.size(); ++l)
      for (double v : t.pre[l]) sig.push_back(v > 0.0);
    return free_energy(t.logits, w.temperature).value;
  };
  for (const auto& x : xs) relu_signs(x);
  for (const auto* set : {&in, &out})
    for (const auto& x : set->points) {
      const double e = set->space == EnergySpace::input ? relu_signs(x) : latent_energy(p.head, x, w.temperature).value;
      sig.push_back(set == &in ? e > w.m_id : e < w.m_ood);
    }
  return sig;
}

struct GradCheck {
  double worst = 0.0;
  int checked = 0;
};

inline GradCheck total_loss_gradient(ModelParams p, const std::vector<Vector>& xs, const std::vector<int>& ys,
                                    const EnergyBatch& in, const EnergyBatch& out, const LossWeights& w,
                                    int samples, std::uint64_t seed) {
  const LossResult r = total_loss(p, xs, ys, in, out, w);
  auto ps = p.tensors();
  const auto gs = std::as_const(r.grad).tensors();
  std::mt19937_64 gen(seed);
  GradCheck out_check;
  // The loss reaches hundreds near the margins; a wider fourth-order stencil
  // keeps rounding well under the tolerance.
  const double h = 1e-4;
  for (int s = 0; s < samples * 4 && out_check.checked < samples; ++s) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, ps.size() - 1)(gen);
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, ps[t].size() - 1)(gen);
    double& coord = ps[t][i];
    const double saved = coord;
    coord = saved + 2 * h;
    const auto sig_up = kink_signature(p, xs, in, out, w);
    coord = saved - 2 * h;
    const auto sig_down = kink_signature(p, xs, in, out, w);
    coord = saved;
    if (sig_up != sig_down) continue;
    const double fd = oracle::central_difference4([&] { return total_loss(p, xs, ys, in, out, w).total; }, coord, h);
    out_check.worst = std::max(out_check.worst, oracle::relative_error(gs[t][i], fd));
    ++out_check.checked;
  }
  return out_check;
}

}  // namespace gradcheck
