// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "oodk/common.hpp"

namespace oodk {

/// K bounded FIFO queues of latent embeddings, one per class. Pushing into a
/// full queue evicts that class's oldest embedding.
class EmbeddingStore {
 public:
  static constexpr std::size_t kDefaultCapacity = 1000;

  EmbeddingStore(int k_classes, int dim, std::size_t capacity = kDefaultCapacity)
      : queues_(static_cast<std::size_t>(k_classes)), capacity_(capacity), dim_(dim) {
    require(k_classes >= 1, ErrorCode::input, "store: need at least one class");
    require(dim >= 1, ErrorCode::input, "store: dimension must be positive");
    require(capacity >= 1, ErrorCode::input, "store: capacity must be positive");
  }

  void push(int class_id, const FeatureVector& embedding) {
    require(class_id >= 0 && class_id < k_classes(), ErrorCode::input,
            "store: invalid class " + std::to_string(class_id));
    require(embedding.size() == static_cast<std::size_t>(dim_), ErrorCode::input,
            "store: dimension mismatch");
    auto& q = queues_[static_cast<std::size_t>(class_id)];
    if (q.size() == capacity_) q.pop_front();
    q.push_back(embedding);
  }

  bool ready(std::size_t min_per_class) const {
    for (const auto& q : queues_)
      if (q.size() < min_per_class) return false;
    return true;
  }

  /// Concatenated contents in class order, oldest first within each class.
  std::pair<std::vector<FeatureVector>, std::vector<int>> snapshot() const {
    std::pair<std::vector<FeatureVector>, std::vector<int>> out;
    for (std::size_t c = 0; c < queues_.size(); ++c)
      for (const auto& v : queues_[c]) {
        out.first.push_back(v);
        out.second.push_back(static_cast<int>(c));
      }
    return out;
  }

  const std::deque<FeatureVector>& queue(int class_id) const {
    return queues_.at(static_cast<std::size_t>(class_id));
  }

  int k_classes() const { return static_cast<int>(queues_.size()); }
  int dim() const { return dim_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::vector<std::deque<FeatureVector>> queues_;
  std::size_t capacity_;
  int dim_;
};

}  // namespace oodk
