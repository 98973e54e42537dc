// SPDX-License-Identifier: Apache-2.0
//
// Negative data augmentation: severe pixel-space corruptions used as
// synthetic outliers (Augmix-lite followed by Jigsaw, or a large random
// convolution), plus the mild Augmix used for augmented-inlier baselines.
//
// Single-row images (H == 1) are treated as 1-D strips: jigsaw permutes
// horizontal segments and random convolutions use 1×k kernels. Feature
// vectors are corrupted through this strip view.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oodk/common.hpp"
#include "oodk/image.hpp"
#include "oodk/parallel.hpp"
#include "oodk/rng.hpp"

namespace oodk {

struct NdaConfig {
  int augmix_severity = 11;
  int augmix_width = 3;
  std::array<int, 2> augmix_depth_range = {1, 3};
  int jigsaw_grid = 4;
  std::vector<int> randconv_kernel_sizes = {9, 11, 13, 15, 17, 19};
  double branch_prob_augjig = 0.5;

  void validate() const {
    require(augmix_severity >= 1, ErrorCode::input, "nda: severity must be >= 1");
    require(augmix_width >= 1, ErrorCode::input, "nda: augmix width must be >= 1");
    require(augmix_depth_range[0] >= 1 && augmix_depth_range[0] <= augmix_depth_range[1],
            ErrorCode::input, "nda: invalid augmix depth range");
    require(jigsaw_grid >= 1, ErrorCode::input, "nda: jigsaw grid must be >= 1");
    require(!randconv_kernel_sizes.empty(), ErrorCode::input, "nda: no randconv kernel sizes");
    for (int k : randconv_kernel_sizes)
      require(k >= 3 && k % 2 == 1, ErrorCode::input, "nda: kernel sizes must be odd and >= 3");
    require(branch_prob_augjig >= 0.0 && branch_prob_augjig <= 1.0, ErrorCode::input,
            "nda: branch probability must lie in [0, 1]");
  }
};

// ---------------------------------------------------------------- jigsaw

inline bool is_permutation_of_cells(const std::vector<int>& perm, std::size_t cells) {
  if (perm.size() != cells) return false;
  std::vector<bool> seen(cells, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= cells || seen[static_cast<std::size_t>(p)])
      return false;
    seen[static_cast<std::size_t>(p)] = true;
  }
  return true;
}

/// Moves the patch at cell i (row-major over a rows×cols grid) to cell perm[i].
inline Image jigsaw_cells(const Image& img, int rows, int cols, const std::vector<int>& perm) {
  require(rows >= 1 && cols >= 1, ErrorCode::input, "jigsaw: grid must be positive");
  require(img.height % rows == 0 && img.width % cols == 0, ErrorCode::input,
          "jigsaw: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
              " does not divide image " + std::to_string(img.height) + "x" +
              std::to_string(img.width));
  require(is_permutation_of_cells(perm, static_cast<std::size_t>(rows * cols)), ErrorCode::input,
          "jigsaw: invalid permutation");
  const int ph = img.height / rows;
  const int pw = img.width / cols;
  Image out(img.height, img.width, img.channels);
  for (int cell = 0; cell < rows * cols; ++cell) {
    const int sy = (cell / cols) * ph, sx = (cell % cols) * pw;
    const int dst = perm[static_cast<std::size_t>(cell)];
    const int dy = (dst / cols) * ph, dx = (dst % cols) * pw;
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        for (int c = 0; c < img.channels; ++c) out.at(dy + y, dx + x, c) = img.at(sy + y, sx + x, c);
  }
  return out;
}

inline Image jigsaw(const Image& img, int grid, const std::vector<int>& perm) {
  return jigsaw_cells(img, grid, grid, perm);
}

inline std::vector<int> inverse_permutation(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

/// Uniform permutation of n cells other than the identity (n >= 2).
inline std::vector<int> random_non_identity_permutation(int n, Rng& rng) {
  require(n >= 2, ErrorCode::input, "jigsaw: need at least two patches for a non-identity permutation");
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    for (int i = 0; i < n; ++i)
      if (perm[static_cast<std::size_t>(i)] != i) return perm;
  }
}

// ---------------------------------------------------------------- augmix

enum class AugOp { rotate, translate_x, translate_y, shear_x, shear_y, posterize, solarize, invert };
inline constexpr int kAugOpCount = 8;

namespace detail {

// Inverse-mapped nearest-neighbour resampling with zero fill.
template <typename SourceOf>
Image resample(const Image& img, SourceOf&& source_of) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto [sx, sy] = source_of(static_cast<double>(x), static_cast<double>(y));
      const long ix = std::lround(sx), iy = std::lround(sy);
      if (ix < 0 || iy < 0 || ix >= img.width || iy >= img.height) continue;
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(static_cast<int>(iy), static_cast<int>(ix), c);
    }
  return out;
}

}  // namespace detail

/// Applies one op at magnitude factor `f` (severity / 10). `sign` is ±1 for
/// the geometric ops.
inline Image apply_aug_op(const Image& img, AugOp op, double f, double sign) {
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  switch (op) {
    case AugOp::rotate: {
      const double deg = sign * std::min(30.0 * f, 45.0);
      const double a = deg * std::numbers::pi / 180.0;
      const double ca = std::cos(a), sa = std::sin(a);
      return detail::resample(img, [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        return std::pair{cx + ca * dx + sa * dy, cy - sa * dx + ca * dy};
      });
    }
    case AugOp::translate_x: {
      const double shift = sign * std::round(std::min(f / 3.0, 0.5) * img.width);
      return detail::resample(img, [&](double x, double y) { return std::pair{x - shift, y}; });
    }
    case AugOp::translate_y: {
      const double shift = sign * std::round(std::min(f / 3.0, 0.5) * img.height);
      return detail::resample(img, [&](double x, double y) { return std::pair{x, y - shift}; });
    }
    case AugOp::shear_x: {
      const double s = sign * std::min(0.3 * f, 0.5);
      return detail::resample(img, [&](double x, double y) { return std::pair{x - s * (y - cy), y}; });
    }
    case AugOp::shear_y: {
      const double s = sign * std::min(0.3 * f, 0.5);
      return detail::resample(img, [&](double x, double y) { return std::pair{x, y - s * (x - cx)}; });
    }
    case AugOp::posterize: {
      const int bits = std::clamp(4 - static_cast<int>(std::floor(4.0 * f)), 1, 8);
      const unsigned mask = (0xFFu << (8 - bits)) & 0xFFu;
      Image out = img;
      for (double& v : out.data) v = static_cast<double>(quantize8(v) & mask) / 255.0;
      return out;
    }
    case AugOp::solarize: {
      const double threshold = std::clamp(1.0 - f, 0.0, 1.0);
      Image out = img;
      for (double& v : out.data)
        if (v >= threshold) v = 1.0 - v;
      return out;
    }
    case AugOp::invert: {
      Image out = img;
      for (double& v : out.data) v = 1.0 - v;
      return out;
    }
  }
  return img;
}

struct AugmixHooks {
  /// Overrides the Beta(1,1) blend weight m.
  std::optional<double> mix_weight;
  /// Replaces every chain op by the identity.
  bool identity_ops = false;
};

/// (1−m)·img + m·Σ w_i chain_i(img), m ~ Beta(1,1), w ~ Dirichlet(1,…,1).
inline Image augmix_lite(const Image& img, int severity, int width, std::array<int, 2> depth_range,
                         Rng& rng, const AugmixHooks& hooks = {}) {
  require(severity >= 1, ErrorCode::input, "augmix: severity must be >= 1");
  require(width >= 1, ErrorCode::input, "augmix: width must be >= 1");
  require(depth_range[0] >= 1 && depth_range[0] <= depth_range[1], ErrorCode::input,
          "augmix: invalid depth range");
  const double f = severity / 10.0;

  std::vector<double> w(static_cast<std::size_t>(width));
  double total = 0.0;
  for (double& v : w) total += (v = rng.exponential());
  for (double& v : w) v /= total;
  const double drawn_m = rng.uniform();
  const double m = hooks.mix_weight.value_or(drawn_m);

  std::vector<double> mixed(img.data.size(), 0.0);
  for (int i = 0; i < width; ++i) {
    Image chain = img;
    const int depth = rng.uniform_int(depth_range[0], depth_range[1]);
    for (int d = 0; d < depth; ++d) {
      const auto op = static_cast<AugOp>(rng.below(kAugOpCount));
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      if (!hooks.identity_ops) chain = apply_aug_op(chain, op, f, sign);
    }
    for (std::size_t j = 0; j < mixed.size(); ++j) mixed[j] += w[static_cast<std::size_t>(i)] * chain.data[j];
  }
  Image out = img;
  if (m == 0.0) return out;
  for (std::size_t j = 0; j < out.data.size(); ++j) out.data[j] = (1.0 - m) * img.data[j] + m * mixed[j];
  out.clamp01();
  return out;
}

inline Image mild_augmix(const Image& img, Rng& rng, const AugmixHooks& hooks = {}) {
  return augmix_lite(img, 3, 3, {1, 3}, rng, hooks);
}

// -------------------------------------------------------------- randconv

/// Kernel layout: [c_out][c_in][ky][kx].
struct ConvKernel {
  int channels = 1;
  int kh = 1;
  int kw = 1;
  std::vector<double> weights;

  double at(int co, int ci, int y, int x) const {
    return weights[((static_cast<std::size_t>(co) * channels + ci) * kh + y) * kw + x];
  }
};

/// Zero-padded "same" convolution. Every tap, padded or not, is accumulated
/// in (c_in, ky, kx) order so results are reproducible bit for bit.
inline Image convolve_same(const Image& img, const ConvKernel& k) {
  require(k.channels == img.channels, ErrorCode::input, "convolve: channel mismatch");
  const int ry = k.kh / 2, rx = k.kw / 2;
  const int pw = img.width + 2 * rx, ph = img.height + 2 * ry;
  const int ch = img.channels;
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph * ch, 0.0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < ch; ++c)
        padded[(static_cast<std::size_t>(y + ry) * pw + (x + rx)) * ch + c] = img.at(y, x, c);

  Image out(img.height, img.width, ch);
  for (int co = 0; co < ch; ++co)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int ci = 0; ci < ch; ++ci)
          for (int dy = 0; dy < k.kh; ++dy) {
            const double* prow = &padded[(static_cast<std::size_t>(y + dy) * pw + x) * ch + ci];
            const double* wrow = &k.weights[((static_cast<std::size_t>(co) * ch + ci) * k.kh + dy) * k.kw];
            for (int dx = 0; dx < k.kw; ++dx) acc += wrow[dx] * prow[static_cast<std::size_t>(dx) * ch];
          }
        out.at(y, x, co) = acc;
      }
  return out;
}

/// Per-image min-max rescale into [0, 1]; a constant image maps to 0.5.
inline void renormalize_min_max(Image& img) {
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) {
    std::fill(img.data.begin(), img.data.end(), 0.5);
    return;
  }
  for (double& v : img.data) v = (v - a) / (b - a);
  img.clamp01();
}

/// Weights iid N(0, 1/(taps·C)).
inline ConvKernel random_kernel(int channels, int kh, int kw, Rng& rng) {
  ConvKernel k{channels, kh, kw, {}};
  k.weights.resize(static_cast<std::size_t>(channels) * channels * kh * kw);
  const double sd = 1.0 / std::sqrt(static_cast<double>(kh) * kw * channels);
  for (double& v : k.weights) v = sd * rng.normal();
  return k;
}

/// Per-channel centred delta: the identity convolution.
inline ConvKernel delta_kernel(int channels, int kh, int kw) {
  ConvKernel k{channels, kh, kw, {}};
  k.weights.assign(static_cast<std::size_t>(channels) * channels * kh * kw, 0.0);
  for (int c = 0; c < channels; ++c)
    k.weights[((static_cast<std::size_t>(c) * channels + c) * kh + kh / 2) * kw + kw / 2] = 1.0;
  return k;
}

struct RandConvHooks {
  bool delta_kernel = false;
};

/// Random k×k convolution followed by min-max renormalization. Single-row
/// images take a 1×k kernel and may be narrower than k.
inline Image randconv(const Image& img, int kernel_size, Rng& rng, const RandConvHooks& hooks = {}) {
  require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorCode::input, "randconv: kernel size must be odd");
  const bool strip = img.height == 1;
  if (!strip)
    require(kernel_size <= std::min(img.height, img.width), ErrorCode::input,
            "randconv: kernel " + std::to_string(kernel_size) + " larger than image " +
                std::to_string(img.height) + "x" + std::to_string(img.width));
  const int kh = strip ? 1 : kernel_size;
  ConvKernel k = hooks.delta_kernel ? delta_kernel(img.channels, kh, kernel_size)
                                    : random_kernel(img.channels, kh, kernel_size, rng);
  Image out = convolve_same(img, k);
  renormalize_min_max(out);
  return out;
}

// ------------------------------------------------------------- pipeline

enum class NdaBranch { augmix_jigsaw, randconv };

struct NdaHooks {
  std::optional<NdaBranch> branch;
  /// Receives the branch taken, when set.
  NdaBranch* taken = nullptr;
};

/// Jigsaw grid used for an image: the configured square grid, or for strips
/// the largest segment count <= grid that divides the width.
inline std::pair<int, int> jigsaw_layout(const Image& img, int grid) {
  if (img.height != 1) return {grid, grid};
  int g = std::min(grid, img.width);
  while (g > 1 && img.width % g != 0) --g;
  return {1, g};
}

/// One NDA draw: Augmix-lite at the configured severity then a non-identity
/// jigsaw, or a random convolution with a kernel size drawn from the list.
inline Image nda_sample(const Image& img, const NdaConfig& cfg, Rng& rng, const NdaHooks& hooks = {}) {
  cfg.validate();
  const bool drawn = rng.bernoulli(cfg.branch_prob_augjig);
  const NdaBranch branch = hooks.branch.value_or(drawn ? NdaBranch::augmix_jigsaw : NdaBranch::randconv);
  if (hooks.taken) *hooks.taken = branch;
  if (branch == NdaBranch::augmix_jigsaw) {
    Image mixed = augmix_lite(img, cfg.augmix_severity, cfg.augmix_width, cfg.augmix_depth_range, rng);
    const auto [rows, cols] = jigsaw_layout(img, cfg.jigsaw_grid);
    return jigsaw_cells(mixed, rows, cols, random_non_identity_permutation(rows * cols, rng));
  }
  const auto& sizes = cfg.randconv_kernel_sizes;
  const int k = sizes[rng.below(sizes.size())];
  return randconv(img, k, rng);
}

/// Corrupts a batch; item i uses seed derive_seed(seed, keys[i]) so outputs do
/// not depend on processing order or thread count.
inline std::vector<Image> nda_batch(const std::vector<Image>& images, const std::vector<std::uint64_t>& keys,
                                    std::uint64_t seed, const NdaConfig& cfg,
                                    unsigned threads = thread_budget()) {
  require(images.size() == keys.size(), ErrorCode::input, "nda: keys and images differ in length");
  std::vector<Image> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, keys[i]));
    out[i] = nda_sample(images[i], cfg, rng);
  }, threads);
  return out;
}

/// FNV-1a, used to key files by name.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace oodk
