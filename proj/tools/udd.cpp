// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth, train, eval, cutout, attn-dump.

#include <CLI11.hpp>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "udd/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace udd;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.json";
constexpr const char* kLogFile = "train_log.jsonl";

fs::path checkpoint_path(const fs::path& p) { return fs::is_directory(p) ? p / kCheckpointFile : p; }

bool has_manifest(const fs::path& dir) { return fs::exists(dir / "manifest.jsonl"); }

// A data argument is either one split directory or the parent written by
// `synth`, holding train/, iid/ and shifted/.
std::vector<fs::path> eval_dirs(const fs::path& data) {
  if (has_manifest(data)) return {data};
  std::vector<fs::path> out;
  for (const char* s : {"iid", "shifted"}) {
    if (has_manifest(data / s)) out.push_back(data / s);
  }
  if (out.empty()) throw std::runtime_error("no manifest.jsonl under " + data.string());
  return out;
}

fs::path train_dir(const fs::path& data) {
  if (has_manifest(data / "train")) return data / "train";
  if (has_manifest(data)) return data;
  throw std::runtime_error("no training manifest under " + data.string());
}

Dataset load(const fs::path& dir) { return load_dataset(dir, &std::cerr); }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad cutout size '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// Cutout fill is the training set's channel means: --fill-data when given,
// else a train/ split next to or under the evaluated data.
std::vector<double> fill_for(const fs::path& fill_data, const fs::path& data, const Dataset& evaluated) {
  if (!fill_data.empty()) return load(train_dir(fill_data)).channel_means();
  for (const auto& dir : {data / "train", data.parent_path() / "train"}) {
    if (has_manifest(dir)) return load(dir).channel_means();
  }
  std::cerr << "warning: no training split found; cutout fill uses the evaluated set's means\n";
  return evaluated.channel_means();
}

struct SynthArgs {
  std::size_t n = 2000;
  std::size_t test_n = 1000;
  std::string bias = "pos=0.9,content=0.9";
  std::string split = "all";
  std::uint64_t seed = 0;
  fs::path out;
  ImageConfig image;
};

int run_synth(const SynthArgs& a) {
  const BiasSpec bias = BiasSpec::parse(a.bias);
  a.image.validate();
  auto emit = [&](Split s, std::size_t n, const fs::path& dir) {
    const Dataset ds = generate_dataset(n, bias, s, a.seed, a.image);
    save_dataset(ds, dir);
    std::cerr << split_name(s) << ": " << ds.size() << " samples -> " << dir.string() << " (" << ds.digest() << ")\n";
  };
  if (a.split == "all") {
    emit(Split::train, a.n, a.out / "train");
    emit(Split::iid, a.test_n, a.out / "iid");
    emit(Split::shifted, a.test_n, a.out / "shifted");
  } else {
    emit(parse_split(a.split), a.n, a.out);
  }
  return 0;
}

struct TrainArgs {
  fs::path config, data, out;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = read_json(a.config).get<TrainConfig>();
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const Dataset ds = load(train_dir(a.data));
  fs::create_directories(a.out);
  std::ofstream log(a.out / kLogFile);
  if (!log) throw std::runtime_error("cannot write " + (a.out / kLogFile).string());
  const auto run = train(ds, cfg, &log, [&](std::size_t epoch, const StepStats& s) {
    std::cerr << "epoch " << epoch + 1 << "/" << cfg.epochs << "  L_total " << s.total << "  L_ce " << s.ce << '\n';
  });
  const auto digest = save_checkpoint(a.out / kCheckpointFile, run.model, run.opt, cfg, ds.digest());
  std::cout << json{{"checkpoint", (a.out / kCheckpointFile).string()}, {"digest", digest}}.dump() << '\n';
  return 0;
}

struct EvalArgs {
  fs::path ckpt, data, report, fill_data;
  std::string sizes;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(a.ckpt));
  EvalReport r;
  r.checkpoint_digest = ck.digest;
  r.config_digest = config_digest(ck.config);
  const auto dirs = eval_dirs(a.data);
  for (const auto& dir : dirs) r.splits.push_back(evaluate_split(ck.model, load(dir)));
  if (!a.sizes.empty()) {
    const Dataset ds = load(dirs.front());
    const auto sizes = parse_sizes(a.sizes);
    r.cutout_split = split_name(ds.split);
    r.cutout = cutout_sweep(ck.model, ds, sizes, fill_for(a.fill_data, a.data, ds));
  }
  const json j = r;
  if (a.report.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(a.report, j);
  }
  return 0;
}

int run_cutout(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(a.ckpt));
  const Dataset ds = load(eval_dirs(a.data).front());
  EvalReport r;
  r.checkpoint_digest = ck.digest;
  r.config_digest = config_digest(ck.config);
  r.cutout_split = split_name(ds.split);
  r.cutout = cutout_sweep(ck.model, ds, parse_sizes(a.sizes), fill_for(a.fill_data, a.data, ds));
  const json j = r;
  if (a.report.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(a.report, j);
  }
  return 0;
}

struct AttnArgs {
  fs::path ckpt, data, out;
  std::string layer = "last";
  std::size_t samples = 8;
  bool fakes_only = false;
};

int run_attn(const AttnArgs& a) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(a.ckpt));
  const Dataset ds = load(eval_dirs(a.data).front());
  const std::size_t depth = ck.config.model.depth;
  std::size_t layer = depth;
  if (a.layer != "last") {
    std::size_t used = 0;
    layer = std::stoul(a.layer, &used);
    if (used != a.layer.size()) throw std::invalid_argument("bad layer '" + a.layer + "'");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size() && rows.size() < a.samples; ++i) {
    if (!a.fakes_only || ds.samples[i].label == 1) rows.push_back(i);
  }
  if (rows.empty()) throw std::runtime_error("no samples selected for the attention dump");
  const auto maps = class_attention(ck.model, ds.batch_images(rows), layer);
  const auto files = write_attention_dump(maps, a.out, rows);

  // Head-averaged mass on the artifact cell of each fake, against 1/N.
  double mass = 0.0;
  std::size_t fakes = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = ds.samples[rows[i]].factors;
    if (!f.cell) continue;
    for (const auto& grid : maps.maps[i]) mass += grid[*f.cell] / static_cast<double>(maps.heads);
    ++fakes;
  }
  json summary{{"layer", layer}, {"samples", rows.size()}, {"files", files.size()},
               {"uniform_cell_mass", 1.0 / static_cast<double>(maps.grid_side * maps.grid_side)}};
  if (fakes > 0) summary["artifact_cell_mass"] = mass / static_cast<double>(fakes);
  std::cout << summary.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale unbiased deepfake detection"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic confounded dataset");
  synth->add_option("--n", sa.n, "Samples in the train split (or the single --split)");
  synth->add_option("--test-n", sa.test_n, "Samples in each test split");
  synth->add_option("--bias", sa.bias, "Bias spec, e.g. pos=0.9,content=0.9");
  synth->add_option("--split", sa.split, "train, iid, shifted or all")->check(CLI::IsMember({"all", "train", "iid", "shifted"}));
  synth->add_option("--seed", sa.seed);
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--side", sa.image.side, "Image side in pixels");
  synth->add_option("--cell", sa.image.cell, "Artifact cell side, equal to the model patch");
  synth->add_option("--amplitude", sa.image.artifact_amplitude, "Artifact checker amplitude");
  synth->add_option("--alpha", sa.image.artifact_alpha, "Artifact blend weight");
  synth->add_option("--contents", sa.image.num_contents, "Number of content ids (even)");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a detector and write a checkpoint");
  trn->add_option("--config", ta.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  trn->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", ta.out, "Checkpoint directory")->required();
  trn->add_option("--seed", ta.seed, "Override the config seed");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint file or directory")->required()->check(CLI::ExistingPath);
  ev->add_option("--data", ea.data, "Split directory or synth output root")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--report", ea.report, "Report JSON path (stdout when omitted)");
  ev->add_option("--cutout-sizes", ea.sizes, "Also run a cutout sweep on the first split");
  ev->add_option("--fill-data", ea.fill_data, "Dataset whose channel means fill the cutout");

  EvalArgs ca;
  ca.sizes = "0,2,4,7,9";
  auto* cut = app.add_subcommand("cutout", "Frame AUC under central cutout of growing size");
  cut->add_option("--ckpt", ca.ckpt)->required()->check(CLI::ExistingPath);
  cut->add_option("--data", ca.data)->required()->check(CLI::ExistingDirectory);
  cut->add_option("--sizes", ca.sizes, "Ascending sizes starting at 0");
  cut->add_option("--report", ca.report, "Report JSON path (stdout when omitted)");
  cut->add_option("--fill-data", ca.fill_data, "Dataset whose channel means fill the cutout");

  AttnArgs aa;
  auto* attn = app.add_subcommand("attn-dump", "Dump class-token attention maps as PGM and CSV");
  attn->add_option("--ckpt", aa.ckpt)->required()->check(CLI::ExistingPath);
  attn->add_option("--data", aa.data)->required()->check(CLI::ExistingDirectory);
  attn->add_option("--layer", aa.layer, "Block index from 1, or 'last'");
  attn->add_option("--samples", aa.samples, "Number of images to dump");
  attn->add_flag("--fakes-only", aa.fakes_only);
  attn->add_option("--out", aa.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(sa);
    if (*trn) return run_train(ta);
    if (*ev) return run_eval(ea);
    if (*cut) return run_cutout(ca);
    if (*attn) return run_attn(aa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
