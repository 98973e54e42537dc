// SPDX-License-Identifier: Apache-2.0
//
// oodk: command-line front end. Every subcommand reads files and writes
// files; all randomness comes from explicit seeds.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oodk/oodk.hpp"

namespace fs = std::filesystem;
using namespace oodk;

namespace {

std::string defaults_footer(const char* section) {
  const auto all = dump_config(RunConfig{});
  return std::string("\nConfig defaults (section \"") + section + "\"):\n" + all[section].dump(2) + "\n";
}

RunConfig config_or_defaults(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

bool is_pnm(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const std::string& dir) {
  require(fs::is_directory(dir), ErrorCode::input, "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_pnm(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

struct ScoreInput {
  std::vector<std::string> ids;
  std::vector<Vector> inputs;
};

// An OODE file (rows keyed by index) or a directory of PNM images (keyed by
// file name).
ScoreInput load_score_input(const std::string& path) {
  ScoreInput s;
  if (fs::is_directory(path)) {
    for (const auto& f : list_images(path)) {
      s.ids.push_back(f.filename().string());
      s.inputs.push_back(read_ppm(f.string()).data);
    }
    require(!s.inputs.empty(), ErrorCode::input, "no PNM images in " + path);
    return s;
  }
  EmbeddingFile f = read_embeddings(path);
  for (std::size_t i = 0; i < f.vectors.size(); ++i) s.ids.push_back(std::to_string(i));
  s.inputs = std::move(f.vectors);
  return s;
}

double checkpoint_temperature(const Checkpoint& c) {
  const auto j = nlohmann::json::parse(c.config_json, nullptr, false);
  if (j.is_object() && j.contains("train") && j["train"].contains("temperature"))
    return j["train"]["temperature"].get<double>();
  return 1.0;
}

nlohmann::ordered_json report_json(const EvalReport& r, std::span<const double> id, std::span<const double> ood) {
  return {{"auroc", r.auroc},
          {"aupr_in", r.aupr_in},
          {"n_id", r.n_id},
          {"n_ood", r.n_ood},
          {"separation_se", separation_in_standard_errors(id, ood)}};
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Energy-based out-of-distribution detection toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // gen-data
  std::string gd_config, gd_out;
  std::optional<std::uint64_t> gd_seed;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic known/novel/modality benchmark");
  gen->add_option("--config", gd_config, "Run config JSON (only the \"data\" section is used)");
  gen->add_option("--out", gd_out, "Output directory")->required();
  gen->add_option("--seed", gd_seed, "Overrides data.seed from the config");
  gen->footer(defaults_footer("data"));

  // train
  std::string tr_config, tr_data, tr_mode, tr_out, tr_history;
  std::optional<std::uint64_t> tr_seed;
  auto* trn = app.add_subcommand("train", "Train a classifier with the selected regularization mode");
  trn->add_option("--config", tr_config, "Run config JSON (sections train, nda, tails)");
  trn->add_option("--data", tr_data, "Directory with train.oode, or PNM images plus labels.csv")->required();
  trn->add_option("--mode", tr_mode, "CE_ONLY, OURS, NDA_ONLY, AUG_NDA, VOS_LIKE or AUG_VOS (default: train.mode)");
  trn->add_option("--out", tr_out, "Checkpoint path (.oodm)")->required();
  trn->add_option("--seed", tr_seed, "Overrides train.seed from the config");
  trn->add_option("--history", tr_history, "Per-epoch loss CSV (default: <out>.history.csv)");
  trn->footer(defaults_footer("train") + defaults_footer("tails") + defaults_footer("nda"));

  // score
  std::string sc_model, sc_data, sc_out, sc_label = "ID";
  auto* scr = app.add_subcommand("score", "Write negative free energies (higher = more in-distribution)");
  scr->add_option("--model", sc_model, "Checkpoint (.oodm)")->required();
  scr->add_option("--data", sc_data, "OODE file or directory of PNM images")->required();
  scr->add_option("--out", sc_out, "Output CSV (id,score,label)")->required();
  scr->add_option("--label", sc_label, "Value of the label column")
      ->check(CLI::IsMember({"ID", "OOD"}))
      ->capture_default_str();

  // eval
  std::string ev_id, ev_ood, ev_out, ev_hist, ev_svg;
  int ev_bins = 30;
  auto* evl = app.add_subcommand("eval", "AUROC and AUPR-in of ID scores against OOD scores");
  evl->add_option("--id", ev_id, "Score CSV of in-distribution inputs")->required();
  evl->add_option("--ood", ev_ood, "Score CSV of out-of-distribution inputs")->required();
  evl->add_option("--out", ev_out, "Report JSON")->required();
  evl->add_option("--hist", ev_hist, "Also write a histogram CSV");
  evl->add_option("--bins", ev_bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
  evl->add_option("--svg", ev_svg, "Also write a histogram SVG");

  // nda
  std::string nd_in, nd_out, nd_config;
  std::uint64_t nd_seed = 0;
  auto* nda = app.add_subcommand("nda", "Corrupt every PNM image in a directory");
  nda->add_option("--in", nd_in, "Input directory")->required();
  nda->add_option("--out", nd_out, "Output directory (same file names)")->required();
  nda->add_option("--seed", nd_seed, "Seed; image seeds derive from it and the file name")->required();
  nda->add_option("--config", nd_config, "Run config JSON (only the \"nda\" section is used)");
  nda->footer(defaults_footer("nda") + "\nOODK_THREADS caps the worker count.\n");

  // fit-gda
  std::string fg_emb, fg_out;
  double fg_eps = ClassGaussianModel::kDefaultEpsilonScale;
  auto* fit = app.add_subcommand("fit-gda", "Fit tied-covariance class Gaussians to labelled embeddings");
  fit->add_option("--embeddings", fg_emb, "Labelled OODE file")->required();
  fit->add_option("--out", fg_out, "Model path (.gda1)")->required();
  fit->add_option("--epsilon-scale", fg_eps, "Diagonal load as a fraction of trace/d")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  // sample-tails
  std::string st_gda, st_out;
  int st_class = 0, st_n = 64, st_N = 10000;
  std::uint64_t st_seed = 0;
  auto* tails = app.add_subcommand("sample-tails", "Draw N points from one class and keep the n least likely");
  tails->add_option("--gda", st_gda, "Model (.gda1)")->required();
  tails->add_option("--class", st_class, "Class id")->required();
  tails->add_option("--n", st_n, "Samples kept")->capture_default_str();
  tails->add_option("--N", st_N, "Samples drawn")->capture_default_str();
  tails->add_option("--seed", st_seed, "Seed")->required();
  tails->add_option("--out", st_out, "Output OODE file")->required();

  // hist
  std::string hi_scores, hi_out;
  int hi_bins = 30;
  auto* hst = app.add_subcommand("hist", "Histogram of a labelled score CSV");
  hst->add_option("--scores", hi_scores, "Score CSV (id,score,label)")->required();
  hst->add_option("--bins", hi_bins, "Number of bins")->check(CLI::PositiveNumber)->capture_default_str();
  hst->add_option("--out", hi_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::usage, e.what());
  }

  if (gen->parsed()) {
    RunConfig cfg = config_or_defaults(gd_config);
    if (gd_seed) cfg.data.seed = *gd_seed;
    Rng rng(cfg.data.seed);
    write_bundle(gd_out, gen_synthetic(cfg.data, rng), cfg.data);
  } else if (trn->parsed()) {
    RunConfig cfg = config_or_defaults(tr_config);
    if (!tr_mode.empty()) cfg.train.mode = parse_train_mode(tr_mode);
    if (tr_seed) cfg.train.seed = *tr_seed;
    const Dataset data = load_training_data(tr_data);
    const TrainResult r = train(data, cfg.train, cfg.nda, cfg.tails);
    save_checkpoint(tr_out, r.params, dump_config(cfg).dump());
    io::write_text(tr_history.empty() ? tr_out + ".history.csv" : tr_history, history_csv(r.history));
    if (r.diverged) fail(ErrorCode::training, r.diagnostics + " (last finite parameters saved)");
  } else if (scr->parsed()) {
    const Checkpoint ckpt = load_checkpoint(sc_model);
    const ScoreInput in = load_score_input(sc_data);
    const Vector s = score_inputs(ckpt.params, in.inputs, checkpoint_temperature(ckpt));
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < s.size(); ++i) rows.push_back({in.ids[i], s[i], sc_label});
    io::write_text(sc_out, scores_csv(rows));
  } else if (evl->parsed()) {
    std::vector<double> id, ood;
    for (const auto& r : read_scores(ev_id)) id.push_back(r.score);
    for (const auto& r : read_scores(ev_ood)) ood.push_back(r.score);
    const EvalReport rep = evaluate(id, ood, ev_bins);
    io::write_text(ev_out, report_json(rep, id, ood).dump(2) + "\n");
    if (!ev_hist.empty()) io::write_text(ev_hist, histogram_csv(rep.histogram));
    if (!ev_svg.empty()) io::write_text(ev_svg, histogram_svg(rep.histogram));
  } else if (nda->parsed()) {
    const RunConfig cfg = config_or_defaults(nd_config);
    require(fs::weakly_canonical(nd_in) != fs::weakly_canonical(nd_out), ErrorCode::usage,
            "--in and --out must differ");
    const auto files = list_images(nd_in);
    std::vector<Image> images;
    std::vector<std::uint64_t> keys;
    for (const auto& f : files) {
      images.push_back(read_ppm(f.string()));
      keys.push_back(fnv1a(f.filename().string()));
    }
    const auto out = nda_batch(images, keys, nd_seed, cfg.nda);
    fs::create_directories(nd_out);
    for (std::size_t i = 0; i < files.size(); ++i) write_ppm((fs::path(nd_out) / files[i].filename()).string(), out[i]);
  } else if (fit->parsed()) {
    const EmbeddingFile f = read_embeddings(fg_emb);
    require(!f.labels.empty(), ErrorCode::input, "fit-gda: embeddings carry no labels");
    const int k = *std::max_element(f.labels.begin(), f.labels.end()) + 1;
    ClassGaussianModel::fit(f.vectors, f.labels, k, fg_eps).save(fg_out);
  } else if (tails->parsed()) {
    const auto model = ClassGaussianModel::load(st_gda);
    Rng rng(st_seed);
    const auto t = sample_tails(model, st_class, TailSamplerConfig{st_N, st_n, 1}, rng);
    std::vector<Vector> vs;
    for (const auto& s : t) vs.push_back(s.vector);
    write_embeddings(st_out, vs, std::vector<int>(vs.size(), st_class));
  } else if (hst->parsed()) {
    const auto rows = read_scores(hi_scores);
    io::write_text(hi_out, histogram_csv(histogram(scores_with_label(rows, "ID"), scores_with_label(rows, "OOD"), hi_bins)));
  }
  return 0;
}

int main(int argc, char** argv) {
  auto report = [](std::string_view code, const std::string& msg) {
    std::string line = msg;
    std::replace(line.begin(), line.end(), '\n', ' ');
    std::cerr << "error: " << code << ": " << line << std::endl;
  };
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    report(to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    report("format", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    report("input", e.what());
    return 2;
  } catch (const std::exception& e) {
    report("input", e.what());
    return 2;
  }
}
