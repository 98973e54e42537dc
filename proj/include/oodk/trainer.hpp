// SPDX-License-Identifier: Apache-2.0
//
// Training objective: cross-entropy on the training data plus α·L_ID and
// β·L_OOD, squared-hinge penalties on free energies of the inlier and
// outlier sets. Which sets feed the two terms depends on the mode:
//
//   mode      inliers (L_ID)               outliers (L_OOD)
//   CE_ONLY   -                            -
//   OURS      latent Gaussian-tail samples NDA corruptions of the batch
//   NDA_ONLY  training batch               NDA corruptions of the batch
//   AUG_NDA   mild Augmix of the batch     NDA corruptions of the batch
//   VOS_LIKE  training batch               latent Gaussian-tail samples
//   AUG_VOS   mild Augmix of the batch     latent Gaussian-tail samples
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "oodk/common.hpp"
#include "oodk/dataset.hpp"
#include "oodk/embedding_store.hpp"
#include "oodk/energy.hpp"
#include "oodk/gda.hpp"
#include "oodk/model.hpp"
#include "oodk/nda.hpp"
#include "oodk/rng.hpp"
#include "oodk/tail_sampler.hpp"

namespace oodk {

enum class TrainMode { ce_only, ours, nda_only, aug_nda, vos_like, aug_vos };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::ce_only: return "CE_ONLY";
    case TrainMode::ours: return "OURS";
    case TrainMode::nda_only: return "NDA_ONLY";
    case TrainMode::aug_nda: return "AUG_NDA";
    case TrainMode::vos_like: return "VOS_LIKE";
    case TrainMode::aug_vos: return "AUG_VOS";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  for (auto m : {TrainMode::ce_only, TrainMode::ours, TrainMode::nda_only, TrainMode::aug_nda,
                 TrainMode::vos_like, TrainMode::aug_vos})
    if (to_string(m) == s) return m;
  fail(ErrorCode::usage, "unknown mode '" + std::string(s) +
                             "' (expected CE_ONLY, OURS, NDA_ONLY, AUG_NDA, VOS_LIKE or AUG_VOS)");
}

inline bool uses_tails(TrainMode m) {
  return m == TrainMode::ours || m == TrainMode::vos_like || m == TrainMode::aug_vos;
}
inline bool uses_nda(TrainMode m) {
  return m == TrainMode::ours || m == TrainMode::nda_only || m == TrainMode::aug_nda;
}
inline bool tails_are_outliers(TrainMode m) {
  return m == TrainMode::vos_like || m == TrainMode::aug_vos;
}
inline bool augments_inliers(TrainMode m) {
  return m == TrainMode::aug_nda || m == TrainMode::aug_vos;
}

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  int lr_halve_every = 10;
  double weight_decay = 5e-4;
  int batch_size = 128;
  double alpha = 0.1;
  double beta = 0.1;
  double m_id = -20.0;
  double m_ood = -7.0;
  double temperature = 1.0;
  /// Negative selects the mode default: 0 for NDA modes, 40% of the epochs
  /// for the VOS-like modes.
  int regularizer_start_epoch = -1;
  TrainMode mode = TrainMode::ours;
  std::uint64_t seed = 0;

  std::vector<int> hidden = {64, 64};
  int latent_dim = 16;
  int refit_every = 50;
  int queue_capacity = 1000;
  /// Negative selects latent_dim + 2.
  int min_per_class = -1;
  double epsilon_scale = ClassGaussianModel::kDefaultEpsilonScale;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int effective_start_epoch() const {
    if (regularizer_start_epoch >= 0) return regularizer_start_epoch;
    return tails_are_outliers(mode) ? static_cast<int>(std::lround(0.4 * epochs)) : 0;
  }

  int effective_min_per_class() const { return min_per_class >= 0 ? min_per_class : latent_dim + 2; }

  void validate() const {
    require(epochs >= 0, ErrorCode::input, "train.epochs must be >= 0");
    require(lr > 0.0, ErrorCode::input, "train.lr must be > 0");
    require(lr_halve_every >= 1, ErrorCode::input, "train.lr_halve_every must be >= 1");
    require(weight_decay >= 0.0, ErrorCode::input, "train.weight_decay must be >= 0");
    require(batch_size >= 1, ErrorCode::input, "train.batch_size must be >= 1");
    require(alpha >= 0.0 && beta >= 0.0, ErrorCode::input, "train.alpha and train.beta must be >= 0");
    require(m_id < m_ood, ErrorCode::input, "train.m_id must be < train.m_ood");
    require(temperature > 0.0, ErrorCode::input, "train.temperature must be > 0");
    require(latent_dim >= 1, ErrorCode::input, "train.latent_dim must be >= 1");
    for (int h : hidden) require(h >= 1, ErrorCode::input, "train.hidden widths must be >= 1");
    require(refit_every >= 1, ErrorCode::input, "train.refit_every must be >= 1");
    require(queue_capacity >= 2, ErrorCode::input, "train.queue_capacity must be >= 2");
    require(epsilon_scale >= 0.0, ErrorCode::input, "train.epsilon_scale must be >= 0");
  }
};

// ---------------------------------------------------------------- losses

/// mean of max(0, E − m_id)².
inline double loss_id(std::span<const double> energies, double m_id) {
  if (energies.empty()) return 0.0;
  double s = 0.0;
  for (double e : energies) {
    const double h = std::max(0.0, e - m_id);
    s += h * h;
  }
  return s / static_cast<double>(energies.size());
}

inline Vector loss_id_gradient(std::span<const double> energies, double m_id) {
  Vector g(energies.size(), 0.0);
  const double n = static_cast<double>(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i)
    if (energies[i] > m_id) g[i] = 2.0 * (energies[i] - m_id) / n;
  return g;
}

/// mean of max(0, m_ood − E)². At E == m_ood the subgradient is 0.
inline double loss_ood(std::span<const double> energies, double m_ood) {
  if (energies.empty()) return 0.0;
  double s = 0.0;
  for (double e : energies) {
    const double h = std::max(0.0, m_ood - e);
    s += h * h;
  }
  return s / static_cast<double>(energies.size());
}

inline Vector loss_ood_gradient(std::span<const double> energies, double m_ood) {
  Vector g(energies.size(), 0.0);
  const double n = static_cast<double>(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i)
    if (energies[i] < m_ood) g[i] = -2.0 * (m_ood - energies[i]) / n;
  return g;
}

/// Points entering an energy term, either raw inputs (full forward) or
/// latent vectors (head only).
enum class EnergySpace { input, latent };

struct EnergyBatch {
  EnergySpace space = EnergySpace::input;
  std::vector<Vector> points;

  bool empty() const { return points.empty(); }
};

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.1;
  double m_id = -20.0;
  double m_ood = -7.0;
  double temperature = 1.0;

  static LossWeights from(const TrainConfig& c) { return {c.alpha, c.beta, c.m_id, c.m_ood, c.temperature}; }
};

struct LossResult {
  double total = 0.0;
  double ce = 0.0;
  double l_id = 0.0;
  double l_ood = 0.0;
  ModelParams grad;
  std::vector<FeatureVector> batch_latents;
  std::size_t correct = 0;
};

namespace detail {

inline void check_logits(const Vector& logits, const char* where) {
  if (!all_finite(logits)) {
    std::ostringstream msg;
    msg << "non-finite logits in " << where << " forward pass (";
    for (std::size_t i = 0; i < logits.size(); ++i) msg << (i ? "," : "") << logits[i];
    msg << ")";
    fail(ErrorCode::training, msg.str());
  }
}

// Adds weight · term(E) over a point set; returns the term value.
template <typename TermFn, typename GradFn>
double energy_term(const ModelParams& p, const EnergyBatch& set, double weight, double margin,
                   double temperature, TermFn term, GradFn term_grad, ModelParams& grad,
                   const ForwardHooks& hooks) {
  if (set.empty()) return 0.0;
  std::vector<ForwardTrace> traces;
  std::vector<Vector> head_logits;
  Vector energies;
  for (const auto& x : set.points) {
    if (set.space == EnergySpace::input) {
      traces.push_back(forward_trace(p, x, hooks));
      check_logits(traces.back().logits, "energy-term");
      energies.push_back(free_energy(traces.back().logits, temperature).value);
    } else {
      require(x.size() == p.latent_dim(), ErrorCode::input, "latent point dimension mismatch");
      head_logits.push_back(p.head.apply(x));
      check_logits(head_logits.back(), "latent");
      energies.push_back(free_energy(head_logits.back(), temperature).value);
    }
  }
  const double value = term(energies, margin);
  if (weight == 0.0) return value;
  const Vector d_e = term_grad(energies, margin);
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    if (d_e[i] == 0.0) continue;
    const Vector& logits = set.space == EnergySpace::input ? traces[i].logits : head_logits[i];
    Vector d_logits = free_energy_gradient(logits, temperature);
    for (double& v : d_logits) v *= weight * d_e[i];
    if (set.space == EnergySpace::input)
      backward(p, traces[i], d_logits, grad, hooks);
    else
      backward_head(p, set.points[i], d_logits, grad);
  }
  return value;
}

}  // namespace detail

/// CE(batch) + α·L_ID(inliers) + β·L_OOD(outliers) and its gradient. Empty
/// sets contribute exactly zero; a zero weight skips the term's gradient.
inline LossResult total_loss(const ModelParams& p, std::span<const Vector> inputs, std::span<const int> labels,
                             const EnergyBatch& inliers, const EnergyBatch& outliers, const LossWeights& w,
                             const ForwardHooks& hooks = {}) {
  require(inputs.size() == labels.size(), ErrorCode::input, "loss: inputs and labels differ in length");
  LossResult r;
  r.grad = p.zeros_like();
  const double n = static_cast<double>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForwardTrace t = forward_trace(p, inputs[i], hooks);
    detail::check_logits(t.logits, "cross-entropy");
    const auto y = static_cast<std::size_t>(labels[i]);
    require(labels[i] >= 0 && y < t.logits.size(), ErrorCode::input, "loss: label out of range");
    // −log softmax_y = −f_y − E(f; T=1)
    r.ce += (-t.logits[y] - free_energy(t.logits, 1.0).value) / n;
    Vector d_logits = free_energy_gradient(t.logits, 1.0);
    for (double& v : d_logits) v = -v / n;
    d_logits[y] -= 1.0 / n;
    if (static_cast<std::size_t>(std::max_element(t.logits.begin(), t.logits.end()) - t.logits.begin()) == y)
      ++r.correct;
    backward(p, t, d_logits, r.grad, hooks);
    r.batch_latents.push_back(t.latent);
  }
  r.l_id = detail::energy_term(p, inliers, w.alpha, w.m_id, w.temperature,
                               [](std::span<const double> e, double m) { return loss_id(e, m); },
                               [](std::span<const double> e, double m) { return loss_id_gradient(e, m); },
                               r.grad, hooks);
  r.l_ood = detail::energy_term(p, outliers, w.beta, w.m_ood, w.temperature,
                                [](std::span<const double> e, double m) { return loss_ood(e, m); },
                                [](std::span<const double> e, double m) { return loss_ood_gradient(e, m); },
                                r.grad, hooks);
  r.total = r.ce + w.alpha * r.l_id + w.beta * r.l_ood;
  if (!std::isfinite(r.total)) fail(ErrorCode::training, "non-finite loss");
  return r;
}

// ----------------------------------------------------------------- AdamW

/// Adam with decoupled weight decay: θ ← θ(1 − lr·wd) − lr·m̂/(√v̂ + eps).
class AdamW {
 public:
  AdamW(const ModelParams& like, double beta1, double beta2, double eps, double weight_decay)
      : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(ModelParams& params, const ModelParams& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double decay = 1.0 - lr * wd_;
    auto ps = params.tensors();
    const auto gs = grad.tensors();
    auto ms = m_.tensors();
    auto vs = v_.tensors();
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (std::size_t i = 0; i < ps[k].size(); ++i) {
        const double g = gs[k][i];
        ms[k][i] = beta1_ * ms[k][i] + (1.0 - beta1_) * g;
        vs[k][i] = beta2_ * vs[k][i] + (1.0 - beta2_) * g * g;
        ps[k][i] *= decay;
        if (ms[k][i] != 0.0) ps[k][i] -= lr * (ms[k][i] / c1) / (std::sqrt(vs[k][i] / c2) + eps_);
      }
  }

 private:
  ModelParams m_, v_;
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
};

// ----------------------------------------------------------------- train

struct EpochStats {
  int epoch = 0;
  double ce = 0.0;
  double l_id = 0.0;
  double l_ood = 0.0;
  double acc = 0.0;
  double lr = 0.0;
};

/// Instrumentation for mode isolation checks.
struct CallCounts {
  std::size_t tail_sampler = 0;
  std::size_t nda_sample = 0;
  std::size_t mild_augmix = 0;
  std::size_t gda_fits = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
  CallCounts calls;
  bool diverged = false;
  std::string diagnostics;
};

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,ce,l_id,l_ood,acc,lr\n";
  for (const auto& h : history)
    out << h.epoch << ',' << h.ce << ',' << h.l_id << ',' << h.l_ood << ',' << h.acc << ',' << h.lr << '\n';
  return out.str();
}

inline TrainResult train(const Dataset& data, const TrainConfig& cfg, const NdaConfig& nda_cfg,
                         const TailSamplerConfig& tail_cfg) {
  cfg.validate();
  nda_cfg.validate();
  tail_cfg.validate();
  require(data.k_classes >= 2, ErrorCode::input, "train: dataset needs at least two classes");
  require(!data.inputs.empty() && data.inputs.size() == data.labels.size(), ErrorCode::input,
          "train: empty or inconsistent dataset");

  Rng rng(cfg.seed);
  TrainResult result;
  result.params = ModelParams::init(static_cast<int>(data.dim()), cfg.hidden, cfg.latent_dim, data.k_classes, rng);
  AdamW opt(result.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
  const RasterView view = RasterView::for_dataset(data);
  const LossWeights weights = LossWeights::from(cfg);
  const TrainMode mode = cfg.mode;
  const int start_epoch = cfg.effective_start_epoch();
  const auto k = static_cast<std::size_t>(data.k_classes);

  EmbeddingStore store(data.k_classes, cfg.latent_dim, static_cast<std::size_t>(cfg.queue_capacity));
  std::optional<ClassGaussianModel> gda;
  std::vector<std::vector<TailSample>> pools(k);
  long step = 0, last_fit = 0;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs && !result.diverged; ++epoch) {
    const double lr = cfg.lr * std::pow(0.5, epoch / cfg.lr_halve_every);
    rng.shuffle(order.begin(), order.end());
    EpochStats stats{epoch, 0, 0, 0, 0, lr};
    std::size_t steps = 0, correct = 0, seen = 0;
    const bool reg_active = epoch >= start_epoch;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      std::vector<Vector> xs;
      std::vector<int> ys;
      for (std::size_t i = b0; i < b1; ++i) {
        xs.push_back(data.inputs[order[i]]);
        ys.push_back(data.labels[order[i]]);
      }

      EnergyBatch inliers, outliers;
      if (reg_active && mode != TrainMode::ce_only) {
        const std::uint64_t step_seed = rng.next_u64();
        if (uses_tails(mode) && gda) {
          EnergyBatch tails{EnergySpace::latent, {}};
          for (std::size_t c = 0; c < k; ++c)
            for (const TailSample* t : pick_tails(pools[c], static_cast<std::size_t>(tail_cfg.per_class_batch), rng))
              tails.points.push_back(t->vector);
          (tails_are_outliers(mode) ? outliers : inliers) = std::move(tails);
        }
        if (mode == TrainMode::nda_only || mode == TrainMode::vos_like) inliers = EnergyBatch{EnergySpace::input, xs};
        if (augments_inliers(mode)) {
          inliers = EnergyBatch{EnergySpace::input, {}};
          for (std::size_t i = 0; i < xs.size(); ++i) {
            Rng item_rng(derive_seed(step_seed, 2 * i));
            inliers.points.push_back(view.from_image(mild_augmix(view.to_image(xs[i]), item_rng)));
            ++result.calls.mild_augmix;
          }
        }
        if (uses_nda(mode)) {
          outliers = EnergyBatch{EnergySpace::input, {}};
          for (std::size_t i = 0; i < xs.size(); ++i) {
            Rng item_rng(derive_seed(step_seed, 2 * i + 1));
            outliers.points.push_back(view.from_image(nda_sample(view.to_image(xs[i]), nda_cfg, item_rng)));
            ++result.calls.nda_sample;
          }
        }
      }

      LossResult loss;
      try {
        loss = total_loss(result.params, xs, ys, inliers, outliers, weights);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::training) throw;
        result.diverged = true;
        result.diagnostics = "epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what();
        break;
      }
      ModelParams before = result.params;
      opt.step(result.params, loss.grad, lr);
      if (!result.params.finite()) {
        result.params = std::move(before);
        result.diverged = true;
        result.diagnostics = "epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                             ": non-finite parameters after update";
        break;
      }

      stats.ce += loss.ce;
      stats.l_id += loss.l_id;
      stats.l_ood += loss.l_ood;
      correct += loss.correct;
      seen += xs.size();
      ++steps;
      ++step;

      if (uses_tails(mode)) {
        for (std::size_t i = 0; i < ys.size(); ++i) store.push(ys[i], loss.batch_latents[i]);
        const bool due = !gda || step - last_fit >= cfg.refit_every;
        if (reg_active && due && store.ready(static_cast<std::size_t>(cfg.effective_min_per_class()))) {
          const auto [emb, lab] = store.snapshot();
          try {
            gda = ClassGaussianModel::fit(emb, lab, data.k_classes, cfg.epsilon_scale);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::numerical) throw;
            continue;  // keep the previous fit
          }
          ++result.calls.gda_fits;
          last_fit = step;
          for (std::size_t c = 0; c < k; ++c) {
            pools[c] = sample_tails(*gda, static_cast<int>(c), tail_cfg, rng);
            ++result.calls.tail_sampler;
          }
        }
      }
    }
    if (steps > 0) {
      stats.ce /= static_cast<double>(steps);
      stats.l_id /= static_cast<double>(steps);
      stats.l_ood /= static_cast<double>(steps);
      stats.acc = static_cast<double>(correct) / static_cast<double>(seen);
      result.history.push_back(stats);
    }
  }
  return result;
}

// --------------------------------------------------------------- scoring

/// Negative free energy per input (higher = more in-distribution).
inline Vector score_inputs(const ModelParams& p, std::span<const Vector> inputs, double temperature = 1.0) {
  Vector out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(free_energy(forward(p, x).logits, temperature).negative());
  return out;
}

inline std::vector<int> predict(const ModelParams& p, std::span<const Vector> inputs) {
  std::vector<int> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    const Vector logits = forward(p, x).logits;
    out.push_back(static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
  }
  return out;
}

}  // namespace oodk
