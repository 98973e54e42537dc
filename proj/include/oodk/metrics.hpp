// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "oodk/common.hpp"

namespace oodk {

namespace detail {

inline void check_score_sets(std::span<const double> id, std::span<const double> ood, const char* what) {
  require(!id.empty() && !ood.empty(), ErrorCode::input, std::string(what) + ": empty score set");
  require(all_finite(id) && all_finite(ood), ErrorCode::input, std::string(what) + ": non-finite score");
}

struct Tagged {
  double score;
  bool is_id;
};

// All scores sorted by score, descending.
inline std::vector<Tagged> merged_descending(std::span<const double> id, std::span<const double> ood) {
  std::vector<Tagged> all;
  all.reserve(id.size() + ood.size());
  for (double s : id) all.push_back({s, true});
  for (double s : ood) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score > b.score; });
  return all;
}

}  // namespace detail

/// P(s_id > s_ood) + ½ P(tie), from one sorted sweep. Pair counts are kept
/// doubled in integers so the result is a single rounding of an exact ratio.
inline double auroc(std::span<const double> id, std::span<const double> ood) {
  detail::check_score_sets(id, ood, "auroc");
  const auto all = detail::merged_descending(id, ood);
  std::uint64_t twice_wins = 0;  // 2·wins + ties
  std::uint64_t id_above = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t id_here = 0, ood_here = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].is_id ? id_here : ood_here) += 1;
      ++j;
    }
    twice_wins += ood_here * (2 * id_above + id_here);
    id_above += id_here;
    i = j;
  }
  const double pairs2 = 2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size());
  return static_cast<double>(twice_wins) / pairs2;
}

/// Area under the precision-recall curve with ID as the positive class:
/// Σ precision·Δrecall over descending distinct-score thresholds.
inline double aupr_in(std::span<const double> id, std::span<const double> ood) {
  detail::check_score_sets(id, ood, "aupr_in");
  const auto all = detail::merged_descending(id, ood);
  const double n_id = static_cast<double>(id.size());
  std::size_t tp = 0, fp = 0;
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      (all[j].is_id ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / n_id;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (recall - prev_recall);
    prev_recall = recall;
    i = j;
  }
  return area;
}

/// Mean per-class recall over the classes present in the truth.
inline double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, int k_classes) {
  require(predicted.size() == truth.size(), ErrorCode::input, "balanced_accuracy: length mismatch");
  require(k_classes >= 1, ErrorCode::input, "balanced_accuracy: need at least one class");
  std::vector<std::size_t> hits(static_cast<std::size_t>(k_classes), 0), totals(hits.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < k_classes, ErrorCode::input, "balanced_accuracy: invalid true label");
    require(predicted[i] >= 0 && predicted[i] < k_classes, ErrorCode::input,
            "balanced_accuracy: invalid predicted label");
    const auto c = static_cast<std::size_t>(truth[i]);
    ++totals[c];
    if (predicted[i] == truth[i]) ++hits[c];
  }
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < totals.size(); ++c)
    if (totals[c] > 0) {
      sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
      ++present;
    }
  require(present > 0, ErrorCode::input, "balanced_accuracy: no class present in truth");
  return sum / present;
}

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
};

/// Equal-width bins over [min, max] of both sets; right-open except the last.
/// A degenerate range yields one bin.
inline std::vector<HistogramBin> histogram(std::span<const double> id, std::span<const double> ood, int bins) {
  require(bins >= 1, ErrorCode::input, "histogram: bins must be >= 1");
  require(all_finite(id) && all_finite(ood), ErrorCode::input, "histogram: non-finite score");
  if (id.empty() && ood.empty()) return {};
  double lo = INFINITY, hi = -INFINITY;
  for (auto set : {id, ood})
    for (double v : set) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) return {HistogramBin{lo, hi, id.size(), ood.size()}};
  const double width = (hi - lo) / bins;
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    out[static_cast<std::size_t>(b)].low = lo + b * width;
    out[static_cast<std::size_t>(b)].high = b + 1 == bins ? hi : lo + (b + 1) * width;
  }
  auto bin_of = [&](double v) {
    auto b = static_cast<long>(std::floor((v - lo) / width));
    return static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1));
  };
  for (double v : id) ++out[bin_of(v)].id_count;
  for (double v : ood) ++out[bin_of(v)].ood_count;
  return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << std::setprecision(17) << "bin_low,bin_high,id_count,ood_count\n";
  for (const auto& b : bins) out << b.low << ',' << b.high << ',' << b.id_count << ',' << b.ood_count << '\n';
  return out.str();
}

/// Two overlaid step outlines (ID and OOD counts) as a standalone SVG.
inline std::string histogram_svg(const std::vector<HistogramBin>& bins, int width = 640, int height = 360) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double margin = 40.0;
  const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  std::size_t peak = 1;
  for (const auto& b : bins) peak = std::max({peak, b.id_count, b.ood_count});
  auto outline = [&](bool id, const char* color, const char* label, int row) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    const double n = static_cast<double>(std::max<std::size_t>(bins.size(), 1));
    double y_prev = margin + plot_h;
    out << margin << ',' << y_prev;
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double count = static_cast<double>(id ? bins[i].id_count : bins[i].ood_count);
      const double x0 = margin + plot_w * static_cast<double>(i) / n;
      const double x1 = margin + plot_w * static_cast<double>(i + 1) / n;
      const double y = margin + plot_h * (1.0 - count / static_cast<double>(peak));
      out << ' ' << x0 << ',' << y << ' ' << x1 << ',' << y;
      y_prev = y;
    }
    out << ' ' << margin + plot_w << ',' << margin + plot_h << "\"/>\n";
    out << "<text x=\"" << margin + 8 << "\" y=\"" << margin + 16 * row << "\" fill=\"" << color
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << label << "</text>\n";
  };
  out << "<line x1=\"" << margin << "\" y1=\"" << margin + plot_h << "\" x2=\"" << margin + plot_w << "\" y2=\""
      << margin + plot_h << "\" stroke=\"black\"/>\n";
  outline(true, "#1f77b4", "ID", 1);
  outline(false, "#d62728", "OOD", 2);
  if (!bins.empty()) {
    out << "<text x=\"" << margin << "\" y=\"" << height - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << bins.front().low << "</text>\n";
    out << "<text x=\"" << margin + plot_w << "\" y=\"" << height - 12
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << bins.back().high << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

struct EvalReport {
  double auroc = 0.0;
  double aupr_in = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::vector<HistogramBin> histogram;
};

inline EvalReport evaluate(std::span<const double> id, std::span<const double> ood, int bins = 0) {
  EvalReport r;
  r.auroc = auroc(id, ood);
  r.aupr_in = aupr_in(id, ood);
  r.n_id = id.size();
  r.n_ood = ood.size();
  if (bins > 0) r.histogram = histogram(id, ood, bins);
  return r;
}

/// Mean difference of two score sets in units of the pooled standard error.
inline double separation_in_standard_errors(std::span<const double> a, std::span<const double> b) {
  auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() > 1 ? v.size() - 1 : 1);
    return std::pair{mean, var};
  };
  require(!a.empty() && !b.empty(), ErrorCode::input, "separation: empty set");
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
  return se > 0.0 ? (ma - mb) / se : (ma > mb ? INFINITY : 0.0);
}

}  // namespace oodk
