// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oodk {

using Vector = std::vector<double>;
using FeatureVector = std::vector<double>;

/// Error categories. The CLI maps them onto exit codes (usage 1, input-side 2,
/// numerical/training 3).
enum class ErrorCode { usage, input, format, estimation, numerical, training };

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::input: return "input";
    case ErrorCode::format: return "format";
    case ErrorCode::estimation: return "estimation";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::training: return "training";
  }
  return "unknown";
}

inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return 1;
    case ErrorCode::input:
    case ErrorCode::format:
    case ErrorCode::estimation: return 2;
    case ErrorCode::numerical:
    case ErrorCode::training: return 3;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace oodk
