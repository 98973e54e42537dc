// SPDX-License-Identifier: Apache-2.0
//
// File formats, run configuration, and the synthetic known/novel-class
// benchmark.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodk/binary_io.hpp"
#include "oodk/common.hpp"
#include "oodk/dataset.hpp"
#include "oodk/image.hpp"
#include "oodk/nda.hpp"
#include "oodk/rng.hpp"
#include "oodk/tail_sampler.hpp"
#include "oodk/trainer.hpp"

namespace oodk {

// ------------------------------------------------------------ embeddings

struct EmbeddingFile {
  std::vector<Vector> vectors;
  std::vector<int> labels;  // empty when the file carries none
  std::uint32_t dim = 0;
};

/// "OODE" | u32 count | u32 dim | u8 has_labels | f32 row-major data | u32 labels.
inline std::vector<std::uint8_t> encode_embeddings(const std::vector<Vector>& vectors, const std::vector<int>& labels,
                                                   std::uint32_t dim = 0) {
  if (!vectors.empty()) dim = static_cast<std::uint32_t>(vectors.front().size());
  require(labels.empty() || labels.size() == vectors.size(), ErrorCode::input,
          "embeddings: labels and vectors differ in length");
  io::ByteWriter w;
  w.magic("OODE");
  w.u32(static_cast<std::uint32_t>(vectors.size()));
  w.u32(dim);
  w.u8(labels.empty() ? 0 : 1);
  for (const auto& v : vectors) {
    require(v.size() == dim, ErrorCode::input, "embeddings: inconsistent dimension");
    for (double x : v) w.f32(static_cast<float>(x));
  }
  for (int l : labels) {
    require(l >= 0, ErrorCode::input, "embeddings: negative label");
    w.u32(static_cast<std::uint32_t>(l));
  }
  return w.bytes();
}

inline EmbeddingFile decode_embeddings(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("OODE");
  EmbeddingFile f;
  const std::uint32_t count = r.u32();
  f.dim = r.u32();
  const std::uint8_t has_labels = r.u8();
  require(has_labels <= 1, ErrorCode::format, "OODE: bad label flag");
  r.need(static_cast<std::size_t>(count) * f.dim * 4 + (has_labels ? std::size_t{count} * 4 : 0));
  f.vectors.assign(count, Vector(f.dim));
  for (auto& v : f.vectors)
    for (double& x : v) x = r.f32();
  if (has_labels) {
    f.labels.resize(count);
    for (int& l : f.labels) l = static_cast<int>(r.u32());
  }
  require(r.at_end(), ErrorCode::format, "OODE: trailing bytes");
  return f;
}

inline void write_embeddings(const std::string& path, const std::vector<Vector>& vectors,
                             const std::vector<int>& labels = {}) {
  io::write_file(path, encode_embeddings(vectors, labels));
}

inline EmbeddingFile read_embeddings(const std::string& path) { return decode_embeddings(io::read_file(path)); }

// -------------------------------------------------------------- synthetic

enum class ModalityKind { uniform_cube, scaled_shifted_mixture };

inline std::string to_string(ModalityKind k) {
  return k == ModalityKind::uniform_cube ? "uniform_cube" : "scaled_shifted_mixture";
}

struct SyntheticSpec {
  int dim = 8;
  int k_known = 4;
  int k_novel = 2;
  int n_per_class = 500;
  double cluster_spread = 1.0;
  double cluster_separation = 6.0;
  ModalityKind modality_kind = ModalityKind::uniform_cube;
  std::uint64_t seed = 0;

  void validate() const {
    require(dim >= 1, ErrorCode::input, "data.dim must be >= 1");
    require(k_known >= 2, ErrorCode::input, "data.k_known must be >= 2");
    require(k_novel >= 0, ErrorCode::input, "data.k_novel must be >= 0");
    require(n_per_class >= dim + 2, ErrorCode::input, "data.n_per_class must be >= dim + 2");
    require(cluster_spread > 0.0, ErrorCode::input, "data.cluster_spread must be > 0");
    require(cluster_separation >= 0.0, ErrorCode::input, "data.cluster_separation must be >= 0");
  }
};

/// Known-class train/test split, novel classes (semantic shift) and
/// off-manifold samples (modality shift).
struct DatasetBundle {
  Dataset train;
  Dataset test_id;
  Dataset test_semantic;  // labels are novel class ids k_known..
  Dataset test_modality;  // unlabelled
  std::vector<Vector> class_means;
};

inline DatasetBundle gen_synthetic(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const auto d = static_cast<std::size_t>(spec.dim);
  const int k_total = spec.k_known + spec.k_novel;

  DatasetBundle b;
  for (int c = 0; c < k_total; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Vector u(d);
      rng.fill_normal(u);
      const double norm = std::sqrt(dot(u, u));
      if (!(norm > 0.0)) continue;
      for (double& v : u) v *= spec.cluster_separation / norm;
      placed = std::all_of(b.class_means.begin(), b.class_means.end(), [&](const Vector& m) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (m[j] - u[j]) * (m[j] - u[j]);
        return std::sqrt(s) >= spec.cluster_separation;
      });
      if (placed) b.class_means.push_back(std::move(u));
    }
    require(placed, ErrorCode::input, "gen_synthetic: could not place class " + std::to_string(c) +
                                          " after 1000 rejection rounds");
  }

  auto draw = [&](int c) {
    Vector x(d);
    rng.fill_normal(x);
    for (std::size_t j = 0; j < d; ++j) x[j] = b.class_means[static_cast<std::size_t>(c)][j] + spec.cluster_spread * x[j];
    return x;
  };

  b.train.k_classes = b.test_id.k_classes = spec.k_known;
  b.test_semantic.k_classes = k_total;
  const auto n = static_cast<std::size_t>(spec.n_per_class);
  const auto n_train = static_cast<std::size_t>(std::lround(0.9 * static_cast<double>(n)));
  for (int c = 0; c < spec.k_known; ++c) {
    std::vector<Vector> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(draw(c));
    rng.shuffle(xs.begin(), xs.end());
    for (std::size_t i = 0; i < n; ++i) {
      Dataset& target = i < n_train ? b.train : b.test_id;
      target.inputs.push_back(std::move(xs[i]));
      target.labels.push_back(c);
    }
  }
  for (int c = spec.k_known; c < k_total; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      b.test_semantic.inputs.push_back(draw(c));
      b.test_semantic.labels.push_back(c);
    }

  Vector lo(d, INFINITY), hi(d, -INFINITY);
  for (const Dataset* set : {&b.train, &b.test_id, &b.test_semantic})
    for (const auto& x : set->inputs)
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], x[j]);
        hi[j] = std::max(hi[j], x[j]);
      }
  Vector center(d), half(d);
  for (std::size_t j = 0; j < d; ++j) {
    center[j] = 0.5 * (lo[j] + hi[j]);
    half[j] = 1.5 * 0.5 * (hi[j] - lo[j]);
  }

  b.test_modality.k_classes = 0;
  if (spec.modality_kind == ModalityKind::uniform_cube) {
    for (std::size_t i = 0; i < n; ++i) {
      Vector x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = center[j] + half[j] * rng.uniform(-1.0, 1.0);
      b.test_modality.inputs.push_back(std::move(x));
    }
  } else {
    // Known mixture stretched 1.5x about the box centre, shifted by a third
    // of the half-width along a random sign pattern, clipped to the box.
    Vector shift(d);
    for (std::size_t j = 0; j < d; ++j) shift[j] = (rng.bernoulli(0.5) ? 1.0 : -1.0) * half[j] / 3.0;
    for (std::size_t i = 0; i < n; ++i) {
      Vector x = draw(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.k_known))));
      for (std::size_t j = 0; j < d; ++j)
        x[j] = std::clamp(center[j] + 1.5 * (x[j] - center[j]) + shift[j], center[j] - half[j], center[j] + half[j]);
      b.test_modality.inputs.push_back(std::move(x));
    }
  }
  return b;
}

namespace fs = std::filesystem;

inline void write_bundle(const std::string& dir, const DatasetBundle& b, const SyntheticSpec& spec) {
  fs::create_directories(dir);
  write_embeddings((fs::path(dir) / "train.oode").string(), b.train.inputs, b.train.labels);
  write_embeddings((fs::path(dir) / "test_id.oode").string(), b.test_id.inputs, b.test_id.labels);
  write_embeddings((fs::path(dir) / "test_semantic.oode").string(), b.test_semantic.inputs, b.test_semantic.labels);
  write_embeddings((fs::path(dir) / "test_modality.oode").string(), b.test_modality.inputs);
  nlohmann::ordered_json meta{{"dim", spec.dim}, {"k_known", spec.k_known}, {"k_novel", spec.k_novel}};
  io::write_text((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
}

// ---------------------------------------------------------- image dataset

/// Directory of PNM images plus labels.csv (`filename,label`, optional header).
inline Dataset load_image_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "labels.csv");
  require(static_cast<bool>(in), ErrorCode::input, "image dataset: missing labels.csv in " + dir);
  Dataset data;
  std::string line;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "filename,label") continue;
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, ErrorCode::format, "labels.csv: malformed line '" + line + "'");
    int label = 0;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::format, "labels.csv: bad label in '" + line + "'");
    }
    require(label >= 0, ErrorCode::format, "labels.csv: negative label");
    const Image img = read_ppm((fs::path(dir) / line.substr(0, comma)).string());
    const RasterShape shape{img.height, img.width, img.channels};
    if (!data.shape) data.shape = shape;
    require(data.shape->height == shape.height && data.shape->width == shape.width &&
                data.shape->channels == shape.channels,
            ErrorCode::input, "image dataset: images differ in shape");
    data.inputs.push_back(img.data);
    data.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  require(!data.inputs.empty(), ErrorCode::input, "image dataset: no images listed");
  data.k_classes = max_label + 1;
  return data;
}

/// Training data from a directory: train.oode from gen-data, or an image
/// directory with labels.csv.
inline Dataset load_training_data(const std::string& dir) {
  const fs::path oode = fs::path(dir) / "train.oode";
  if (fs::exists(oode)) {
    EmbeddingFile f = read_embeddings(oode.string());
    require(!f.labels.empty(), ErrorCode::input, "train.oode carries no labels");
    Dataset data;
    data.inputs = std::move(f.vectors);
    data.labels = std::move(f.labels);
    data.k_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    const fs::path meta = fs::path(dir) / "meta.json";
    if (fs::exists(meta)) {
      const auto j = nlohmann::json::parse(io::read_text(meta.string()), nullptr, false);
      if (j.is_object() && j.contains("k_known")) data.k_classes = std::max(data.k_classes, j["k_known"].get<int>());
    }
    return data;
  }
  return load_image_dataset(dir);
}

// ------------------------------------------------------------ score files

struct ScoreRow {
  std::string id;
  double score = 0.0;
  std::string label;  // "ID" or "OOD"
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string scores_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "id,score,label\n";
  for (const auto& r : rows) out += r.id + "," + format_double(r.score) + "," + r.label + "\n";
  return out;
}

inline std::vector<ScoreRow> parse_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format, "scores: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "id,score,label", ErrorCode::format, "scores: expected header 'id,score,label'");
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    require(a != std::string::npos && b != a, ErrorCode::format, "scores: malformed row '" + line + "'");
    ScoreRow r;
    r.id = line.substr(0, a);
    const std::string s = line.substr(a + 1, b - a - 1);
    char* end = nullptr;
    r.score = std::strtod(s.c_str(), &end);
    require(end != s.c_str() && *end == '\0' && std::isfinite(r.score), ErrorCode::format,
            "scores: bad score in '" + line + "'");
    r.label = line.substr(b + 1);
    require(r.label == "ID" || r.label == "OOD", ErrorCode::format, "scores: label must be ID or OOD");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ScoreRow> read_scores(const std::string& path) { return parse_scores_csv(io::read_text(path)); }

inline std::vector<double> scores_with_label(const std::vector<ScoreRow>& rows, std::string_view label) {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.label == label) out.push_back(r.score);
  return out;
}

// ----------------------------------------------------------------- config

struct RunConfig {
  TrainConfig train;
  NdaConfig nda;
  TailSamplerConfig tails;
  SyntheticSpec data;
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
  require(obj.is_object(), ErrorCode::input, "config: '" + section + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    require(ok, ErrorCode::input, "config: unknown key '" + (section.empty() ? "" : section + ".") + it.key() + "'");
  }
}

template <typename T>
void take(const json& obj, const std::string& section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::input, "config: bad value for '" + section + "." + key + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  using detail::take;
  RunConfig c;
  detail::reject_unknown(root, "", {"train", "nda", "tails", "data"});
  if (root.contains("train")) {
    const auto& t = root["train"];
    detail::reject_unknown(t, "train",
                           {"epochs", "lr", "lr_halve_every", "weight_decay", "batch_size", "alpha", "beta", "m_id",
                            "m_ood", "temperature", "regularizer_start_epoch", "mode", "seed", "hidden", "latent_dim",
                            "refit_every", "queue_capacity", "min_per_class", "epsilon_scale", "adam_beta1",
                            "adam_beta2", "adam_eps"});
    auto& o = c.train;
    take(t, "train", "epochs", o.epochs);
    take(t, "train", "lr", o.lr);
    take(t, "train", "lr_halve_every", o.lr_halve_every);
    take(t, "train", "weight_decay", o.weight_decay);
    take(t, "train", "batch_size", o.batch_size);
    take(t, "train", "alpha", o.alpha);
    take(t, "train", "beta", o.beta);
    take(t, "train", "m_id", o.m_id);
    take(t, "train", "m_ood", o.m_ood);
    take(t, "train", "temperature", o.temperature);
    take(t, "train", "regularizer_start_epoch", o.regularizer_start_epoch);
    if (t.contains("mode")) {
      std::string m;
      take(t, "train", "mode", m);
      try {
        o.mode = parse_train_mode(m);
      } catch (const Error& e) {
        fail(ErrorCode::input, std::string("config: train.mode: ") + e.what());
      }
    }
    take(t, "train", "seed", o.seed);
    take(t, "train", "hidden", o.hidden);
    take(t, "train", "latent_dim", o.latent_dim);
    take(t, "train", "refit_every", o.refit_every);
    take(t, "train", "queue_capacity", o.queue_capacity);
    take(t, "train", "min_per_class", o.min_per_class);
    take(t, "train", "epsilon_scale", o.epsilon_scale);
    take(t, "train", "adam_beta1", o.adam_beta1);
    take(t, "train", "adam_beta2", o.adam_beta2);
    take(t, "train", "adam_eps", o.adam_eps);
  }
  if (root.contains("nda")) {
    const auto& t = root["nda"];
    detail::reject_unknown(t, "nda", {"augmix_severity", "augmix_width", "augmix_depth_range", "jigsaw_grid",
                                      "randconv_kernel_sizes", "branch_prob_augjig"});
    auto& o = c.nda;
    take(t, "nda", "augmix_severity", o.augmix_severity);
    take(t, "nda", "augmix_width", o.augmix_width);
    take(t, "nda", "augmix_depth_range", o.augmix_depth_range);
    take(t, "nda", "jigsaw_grid", o.jigsaw_grid);
    take(t, "nda", "randconv_kernel_sizes", o.randconv_kernel_sizes);
    take(t, "nda", "branch_prob_augjig", o.branch_prob_augjig);
  }
  if (root.contains("tails")) {
    const auto& t = root["tails"];
    detail::reject_unknown(t, "tails", {"draws_n_total", "rank_n", "per_class_batch"});
    take(t, "tails", "draws_n_total", c.tails.draws_n_total);
    take(t, "tails", "rank_n", c.tails.rank_n);
    take(t, "tails", "per_class_batch", c.tails.per_class_batch);
  }
  if (root.contains("data")) {
    const auto& t = root["data"];
    detail::reject_unknown(t, "data", {"dim", "k_known", "k_novel", "n_per_class", "cluster_spread",
                                       "cluster_separation", "modality_kind", "seed"});
    auto& o = c.data;
    take(t, "data", "dim", o.dim);
    take(t, "data", "k_known", o.k_known);
    take(t, "data", "k_novel", o.k_novel);
    take(t, "data", "n_per_class", o.n_per_class);
    take(t, "data", "cluster_spread", o.cluster_spread);
    take(t, "data", "cluster_separation", o.cluster_separation);
    if (t.contains("modality_kind")) {
      std::string k;
      take(t, "data", "modality_kind", k);
      if (k == "uniform_cube")
        o.modality_kind = ModalityKind::uniform_cube;
      else if (k == "scaled_shifted_mixture")
        o.modality_kind = ModalityKind::scaled_shifted_mixture;
      else
        fail(ErrorCode::input, "config: bad value for 'data.modality_kind'");
    }
    take(t, "data", "seed", o.seed);
  }
  c.train.validate();
  c.nda.validate();
  c.tails.validate();
  c.data.validate();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::input, std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) { return parse_config(io::read_text(path)); }

inline nlohmann::ordered_json dump_config(const RunConfig& c) {
  const auto& t = c.train;
  const auto& n = c.nda;
  const auto& d = c.data;
  return nlohmann::ordered_json{
      {"train",
       {{"epochs", t.epochs}, {"lr", t.lr}, {"lr_halve_every", t.lr_halve_every}, {"weight_decay", t.weight_decay},
        {"batch_size", t.batch_size}, {"alpha", t.alpha}, {"beta", t.beta}, {"m_id", t.m_id}, {"m_ood", t.m_ood},
        {"temperature", t.temperature}, {"regularizer_start_epoch", t.regularizer_start_epoch},
        {"mode", to_string(t.mode)}, {"seed", t.seed}, {"hidden", t.hidden}, {"latent_dim", t.latent_dim},
        {"refit_every", t.refit_every}, {"queue_capacity", t.queue_capacity}, {"min_per_class", t.min_per_class},
        {"epsilon_scale", t.epsilon_scale}, {"adam_beta1", t.adam_beta1}, {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps}}},
      {"nda",
       {{"augmix_severity", n.augmix_severity}, {"augmix_width", n.augmix_width},
        {"augmix_depth_range", n.augmix_depth_range}, {"jigsaw_grid", n.jigsaw_grid},
        {"randconv_kernel_sizes", n.randconv_kernel_sizes}, {"branch_prob_augjig", n.branch_prob_augjig}}},
      {"tails",
       {{"draws_n_total", c.tails.draws_n_total}, {"rank_n", c.tails.rank_n},
        {"per_class_batch", c.tails.per_class_batch}}},
      {"data",
       {{"dim", d.dim}, {"k_known", d.k_known}, {"k_novel", d.k_novel}, {"n_per_class", d.n_per_class},
        {"cluster_spread", d.cluster_spread}, {"cluster_separation", d.cluster_separation},
        {"modality_kind", to_string(d.modality_kind)}, {"seed", d.seed}}}};
}

}  // namespace oodk
