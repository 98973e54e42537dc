// SPDX-License-Identifier: Apache-2.0
//
// Classifier F = c ∘ h: an MLP feature extractor h (ReLU between hidden
// layers, linear latent layer) followed by a linear head c. Gradients are
// accumulated by hand-written reverse mode.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oodk/binary_io.hpp"
#include "oodk/common.hpp"
#include "oodk/dense_layer.hpp"
#include "oodk/rng.hpp"

namespace oodk {

struct ModelParams {
  std::vector<DenseLayer> backbone;
  DenseLayer head;

  /// He-normal for ReLU-fed layers, LeCun-normal for the latent layer and
  /// head; zero biases.
  static ModelParams init(int input_dim, const std::vector<int>& hidden, int latent_dim,
                          int k_classes, Rng& rng) {
    require(input_dim >= 1 && latent_dim >= 1 && k_classes >= 2, ErrorCode::input,
            "model: invalid shape");
    ModelParams p;
    std::vector<int> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(latent_dim);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      require(widths[i + 1] >= 1, ErrorCode::input, "model: non-positive layer width");
      DenseLayer layer(static_cast<std::size_t>(widths[i]), static_cast<std::size_t>(widths[i + 1]));
      const bool relu_fed = i + 2 < widths.size();
      const double sd = std::sqrt((relu_fed ? 2.0 : 1.0) / widths[i]);
      for (double& w : layer.weight.data()) w = sd * rng.normal();
      p.backbone.push_back(std::move(layer));
    }
    p.head = DenseLayer(static_cast<std::size_t>(latent_dim), static_cast<std::size_t>(k_classes));
    const double sd = std::sqrt(1.0 / latent_dim);
    for (double& w : p.head.weight.data()) w = sd * rng.normal();
    return p;
  }

  /// Same shapes, all zeros.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto t : z.tensors()) std::fill(t.begin(), t.end(), 0.0);
    return z;
  }

  std::size_t input_dim() const { return backbone.front().in_dim(); }
  std::size_t latent_dim() const { return head.in_dim(); }
  std::size_t k_classes() const { return head.out_dim(); }

  /// Every parameter array, in a fixed order.
  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> out;
    for (auto& l : backbone) {
      out.emplace_back(l.weight.data());
      out.emplace_back(l.bias);
    }
    out.emplace_back(head.weight.data());
    out.emplace_back(head.bias);
    return out;
  }

  std::vector<std::span<const double>> tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : backbone) {
      out.emplace_back(l.weight.data());
      out.emplace_back(l.bias);
    }
    out.emplace_back(head.weight.data());
    out.emplace_back(head.bias);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
  }

  bool finite() const {
    for (auto t : tensors())
      if (!all_finite(t)) return false;
    return true;
  }

  bool operator==(const ModelParams&) const = default;
};

struct ForwardHooks {
  /// Skip the ReLUs, making h linear.
  bool bypass_relu = false;
};

/// Activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Vector> inputs;  // input to each backbone layer
  std::vector<Vector> pre;     // pre-activation of each backbone layer
  Vector latent;
  Vector logits;
};

inline ForwardTrace forward_trace(const ModelParams& p, std::span<const double> x,
                                  const ForwardHooks& hooks = {}) {
  require(x.size() == p.input_dim(), ErrorCode::input,
          "forward: input dimension " + std::to_string(x.size()) + " does not match model " +
              std::to_string(p.input_dim()));
  ForwardTrace t;
  Vector a(x.begin(), x.end());
  for (std::size_t i = 0; i < p.backbone.size(); ++i) {
    t.inputs.push_back(a);
    Vector z = p.backbone[i].apply(a);
    t.pre.push_back(z);
    const bool last = i + 1 == p.backbone.size();
    if (!last && !hooks.bypass_relu)
      for (double& v : z) v = std::max(v, 0.0);
    a = std::move(z);
  }
  t.latent = a;
  t.logits = p.head.apply(t.latent);
  return t;
}

struct ForwardResult {
  FeatureVector latent;
  Vector logits;
};

inline ForwardResult forward(const ModelParams& p, std::span<const double> x, const ForwardHooks& hooks = {}) {
  ForwardTrace t = forward_trace(p, x, hooks);
  return {std::move(t.latent), std::move(t.logits)};
}

/// Accumulates ∂L/∂θ of the head given ∂L/∂logits; returns ∂L/∂latent.
inline Vector backward_head(const ModelParams& p, std::span<const double> latent,
                            std::span<const double> d_logits, ModelParams& grad) {
  const auto& w = p.head.weight;
  Vector d_latent(latent.size(), 0.0);
  for (std::size_t o = 0; o < w.rows(); ++o) {
    const double g = d_logits[o];
    if (g == 0.0) continue;
    grad.head.bias[o] += g;
    auto gw = grad.head.weight.row(o);
    const auto wr = w.row(o);
    for (std::size_t j = 0; j < latent.size(); ++j) {
      gw[j] += g * latent[j];
      d_latent[j] += g * wr[j];
    }
  }
  return d_latent;
}

/// Full reverse pass from ∂L/∂logits through head and backbone.
inline void backward(const ModelParams& p, const ForwardTrace& t, std::span<const double> d_logits,
                     ModelParams& grad, const ForwardHooks& hooks = {}) {
  Vector delta = backward_head(p, t.latent, d_logits, grad);
  for (std::size_t ii = p.backbone.size(); ii-- > 0;) {
    const bool last = ii + 1 == p.backbone.size();
    if (!last && !hooks.bypass_relu)
      for (std::size_t j = 0; j < delta.size(); ++j)
        if (t.pre[ii][j] <= 0.0) delta[j] = 0.0;
    const auto& layer = p.backbone[ii];
    auto& gl = grad.backbone[ii];
    const auto& in = t.inputs[ii];
    Vector next(layer.in_dim(), 0.0);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double g = delta[o];
      if (g == 0.0) continue;
      gl.bias[o] += g;
      auto gw = gl.weight.row(o);
      const auto wr = layer.weight.row(o);
      for (std::size_t j = 0; j < in.size(); ++j) {
        gw[j] += g * in[j];
        next[j] += g * wr[j];
      }
    }
    delta = std::move(next);
  }
}

// ------------------------------------------------------------ checkpoint

/// "OODM" | u32 version | u32 n_backbone | (u32 in, u32 out) per backbone
/// layer | u32 head_in | u32 head_out | f64 weights then bias per layer,
/// head last | u32-prefixed config JSON.
inline std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& p, const std::string& config_json) {
  io::ByteWriter w;
  w.magic("OODM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(p.backbone.size()));
  for (const auto& l : p.backbone) {
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
  }
  w.u32(static_cast<std::uint32_t>(p.head.in_dim()));
  w.u32(static_cast<std::uint32_t>(p.head.out_dim()));
  for (auto t : p.tensors())
    for (double v : t) w.f64(v);
  w.string(config_json);
  return w.bytes();
}

struct Checkpoint {
  ModelParams params;
  std::string config_json;
};

inline Checkpoint deserialize_checkpoint(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("OODM");
  require(r.u32() == 1, ErrorCode::format, "OODM: unsupported version");
  const std::uint32_t n = r.u32();
  require(n >= 1 && n <= 64, ErrorCode::format, "OODM: implausible layer count");
  Checkpoint c;
  std::size_t prev_out = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t in = r.u32(), out = r.u32();
    require(in >= 1 && out >= 1 && in <= (1u << 20) && out <= (1u << 20), ErrorCode::format,
            "OODM: implausible layer shape");
    require(i == 0 || in == prev_out, ErrorCode::format, "OODM: layer shapes do not chain");
    c.params.backbone.emplace_back(in, out);
    prev_out = out;
  }
  const std::size_t hin = r.u32(), hout = r.u32();
  require(hin == prev_out && hout >= 1 && hout <= (1u << 20), ErrorCode::format, "OODM: bad head shape");
  c.params.head = DenseLayer(hin, hout);
  for (auto t : c.params.tensors()) {
    r.need(t.size() * 8);
    for (double& v : t) v = r.f64();
  }
  c.config_json = r.string();
  require(r.at_end(), ErrorCode::format, "OODM: trailing bytes");
  return c;
}

inline void save_checkpoint(const std::string& path, const ModelParams& p, const std::string& config_json) {
  io::write_file(path, serialize_checkpoint(p, config_json));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(io::read_file(path));
}

}  // namespace oodk
