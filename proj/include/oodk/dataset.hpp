// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "oodk/common.hpp"
#include "oodk/image.hpp"

namespace oodk {

struct RasterShape {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
};

/// Labelled inputs. Image datasets carry their raster shape; plain feature
/// vectors do not.
struct Dataset {
  std::vector<Vector> inputs;
  std::vector<int> labels;
  int k_classes = 0;
  std::optional<RasterShape> shape;

  std::size_t size() const { return inputs.size(); }
  std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
};

/// Maps model inputs to rasters in [0, 1] and back. Images map one to one;
/// feature vectors become 1×D single-channel strips after per-coordinate
/// min-max scaling against a reference bounding box.
class RasterView {
 public:
  static RasterView for_dataset(const Dataset& data) {
    RasterView v;
    if (data.shape) {
      require(data.shape->size() == data.dim(), ErrorCode::input, "raster: shape does not match input size");
      v.shape_ = *data.shape;
      return v;
    }
    const std::size_t d = data.dim();
    require(d >= 1, ErrorCode::input, "raster: empty dataset");
    v.shape_ = RasterShape{1, static_cast<int>(d), 1};
    v.lo_.assign(d, 0.0);
    v.span_.assign(d, 1.0);
    Vector hi(d);
    for (std::size_t j = 0; j < d; ++j) {
      v.lo_[j] = hi[j] = data.inputs.front()[j];
    }
    for (const auto& x : data.inputs)
      for (std::size_t j = 0; j < d; ++j) {
        v.lo_[j] = std::min(v.lo_[j], x[j]);
        hi[j] = std::max(hi[j], x[j]);
      }
    for (std::size_t j = 0; j < d; ++j) v.span_[j] = hi[j] > v.lo_[j] ? hi[j] - v.lo_[j] : 1.0;
    return v;
  }

  Image to_image(std::span<const double> x) const {
    Image img(shape_.height, shape_.width, shape_.channels);
    for (std::size_t j = 0; j < x.size(); ++j)
      img.data[j] = lo_.empty() ? x[j] : std::clamp((x[j] - lo_[j]) / span_[j], 0.0, 1.0);
    return img;
  }

  Vector from_image(const Image& img) const {
    Vector x(img.data.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = lo_.empty() ? img.data[j] : lo_[j] + img.data[j] * span_[j];
    return x;
  }

  const RasterShape& shape() const { return shape_; }

 private:
  RasterShape shape_;
  Vector lo_;
  Vector span_;
};

}  // namespace oodk
