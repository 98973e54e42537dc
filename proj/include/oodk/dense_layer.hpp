// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "oodk/common.hpp"
#include "oodk/linalg.hpp"

namespace oodk {

/// Affine map y = W x + b with W stored out×in.
struct DenseLayer {
  Matrix weight;
  Vector bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  void apply(std::span<const double> x, std::span<double> y) const {
    require(x.size() == in_dim() && y.size() == out_dim(), ErrorCode::input,
            "dense layer: shape mismatch");
    for (std::size_t o = 0; o < out_dim(); ++o) y[o] = bias[o] + dot(weight.row(o), x);
  }

  Vector apply(std::span<const double> x) const {
    Vector y(out_dim());
    apply(x, y);
    return y;
  }

  bool operator==(const DenseLayer&) const = default;
};

}  // namespace oodk
