// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "udd/digest.hpp"
#include "udd/shuffle.hpp"

namespace udd {

using nlohmann::json;

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: scores and labels differ in length");
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw std::invalid_argument("roc_auc: NaN score");
    (labels[i] == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: need both classes, got a single-class input");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney count, kept integral so ties are exact.
  std::uint64_t twice = 0, neg_below = 0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t e = g;
    std::uint64_t p = 0, q = 0;
    while (e < order.size() && scores[order[e]] == scores[order[g]]) {
      (labels[order[e]] == 1 ? p : q) += 1;
      ++e;
    }
    twice += 2 * p * neg_below + p * q;
    neg_below += q;
    g = e;
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pos * neg);
}

std::vector<std::size_t> sample_video_frames(std::size_t count, std::size_t max_frames) {
  if (max_frames == 0) throw std::invalid_argument("sample_video_frames: max_frames must be positive");
  std::vector<std::size_t> idx;
  if (count <= max_frames) {
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  for (std::size_t i = 0; i < max_frames; ++i) idx.push_back(i * count / max_frames);
  return idx;
}

double video_auc(std::span<const double> scores, std::span<const int> labels, std::span<const std::size_t> video_ids,
                 std::size_t max_frames) {
  if (scores.size() != labels.size() || scores.size() != video_ids.size()) {
    throw std::invalid_argument("video_auc: scores, labels and video ids differ in length");
  }
  std::map<std::size_t, std::vector<std::size_t>> frames;
  std::vector<std::size_t> first_seen;
  for (std::size_t i = 0; i < video_ids.size(); ++i) {
    auto& f = frames[video_ids[i]];
    if (f.empty()) first_seen.push_back(video_ids[i]);
    f.push_back(i);
  }
  std::vector<double> means;
  std::vector<int> video_labels;
  for (auto id : first_seen) {
    const auto& f = frames[id];
    for (auto i : f) {
      if (labels[i] != labels[f[0]]) {
        throw std::invalid_argument("video_auc: video " + std::to_string(id) + " mixes real and fake frames");
      }
    }
    double s = 0.0;
    const auto pick = sample_video_frames(f.size(), max_frames);
    for (auto k : pick) s += scores[f[k]];
    means.push_back(s / static_cast<double>(pick.size()));
    video_labels.push_back(labels[f[0]]);
  }
  return roc_auc(means, video_labels);
}

std::vector<double> score_dataset(const Model& m, const Dataset& ds, const std::optional<CutoutOptions>& cutout,
                                  std::size_t batch) {
  if (ds.image.side != m.cfg().image_side || ds.image.channels != m.cfg().channels) {
    throw std::invalid_argument("dataset images (" + std::to_string(ds.image.side) + "px, " +
                                std::to_string(ds.image.channels) + "ch) do not match the model (" +
                                std::to_string(m.cfg().image_side) + "px, " + std::to_string(m.cfg().channels) +
                                "ch)");
  }
  if (batch == 0) throw std::invalid_argument("score_dataset: batch must be positive");
  std::vector<double> scores;
  scores.reserve(ds.size());
  const std::size_t p = ds.image.pixels();
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t n = std::min(batch, ds.size() - start);
    std::vector<double> px(n * p);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& src = ds.samples[start + i].pixels;
      if (cutout) {
        const auto cut = cutout_center(src, ds.image, cutout->size, cutout->fill);
        std::copy(cut.begin(), cut.end(), px.begin() + static_cast<std::ptrdiff_t>(i * p));
      } else {
        std::copy(src.begin(), src.end(), px.begin() + static_cast<std::ptrdiff_t>(i * p));
      }
    }
    const auto images = Tensor::from({n, ds.image.channels, ds.image.side, ds.image.side}, std::move(px));
    const auto pred = predict(m, images);
    const auto prob = softmax(pred.logits, 1);
    for (std::size_t i = 0; i < n; ++i) scores.push_back(prob.at({i, 1}));
  }
  return scores;
}

namespace {

std::vector<int> all_labels(const Dataset& ds) {
  std::vector<int> y;
  for (const auto& s : ds.samples) y.push_back(s.label);
  return y;
}

class NoAugmentationGuard {
 public:
  NoAugmentationGuard() : start_(augmentation_draws()) {}
  void check(const char* where) const {
    if (augmentation_draws() != start_) {
      throw std::logic_error(std::string(where) + ": augmentation specs were sampled during evaluation");
    }
  }

 private:
  std::uint64_t start_;
};

}  // namespace

SplitReport evaluate_split(const Model& m, const Dataset& ds) {
  const NoAugmentationGuard guard;
  SplitReport r;
  r.split = split_name(ds.split);
  r.data_digest = ds.digest();
  r.samples = ds.size();
  const auto scores = score_dataset(m, ds);
  const auto labels = all_labels(ds);
  std::vector<std::size_t> vids;
  for (const auto& s : ds.samples) vids.push_back(s.video_id);
  std::vector<std::size_t> distinct = vids;
  std::sort(distinct.begin(), distinct.end());
  r.videos = static_cast<std::size_t>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
  r.frame_auc = roc_auc(scores, labels);
  r.video_auc = video_auc(scores, labels, vids);
  guard.check("evaluate_split");
  return r;
}

std::vector<CutoutPoint> cutout_sweep(const Model& m, const Dataset& ds, std::span<const std::size_t> sizes,
                                      std::span<const double> fill) {
  if (sizes.empty() || sizes[0] != 0) throw std::invalid_argument("cutout_sweep: sizes must start at 0");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw std::invalid_argument("cutout_sweep: sizes must ascend strictly");
  }
  const NoAugmentationGuard guard;
  const auto labels = all_labels(ds);
  std::vector<CutoutPoint> out;
  for (auto s : sizes) {
    CutoutOptions opt{s, std::vector<double>(fill.begin(), fill.end())};
    const auto scores = s == 0 ? score_dataset(m, ds) : score_dataset(m, ds, opt);
    out.push_back({s, roc_auc(scores, labels)});
  }
  guard.check("cutout_sweep");
  return out;
}

std::string config_digest(const TrainConfig& cfg) {
  Fnv1a h;
  h.update(json(cfg).dump());
  return h.hex();
}

void to_json(json& j, const SplitReport& r) {
  j = {{"split", r.split},         {"data_digest", r.data_digest}, {"samples", r.samples},
       {"videos", r.videos},       {"frame_auc", r.frame_auc},     {"video_auc", r.video_auc}};
}

void to_json(json& j, const CutoutPoint& p) { j = {{"s", p.size}, {"frame_auc", p.frame_auc}}; }

void to_json(json& j, const EvalReport& r) {
  j = {{"checkpoint_digest", r.checkpoint_digest}, {"config_digest", r.config_digest}};
  json splits = json::object();
  for (const auto& s : r.splits) splits[s.split] = s;
  j["splits"] = splits;
  if (!r.cutout.empty()) {
    j["cutout_split"] = r.cutout_split;
    j["cutout"] = r.cutout;
  }
}

AttentionMaps class_attention(const Model& m, const Tensor& images, std::size_t layer) {
  const auto& cfg = m.cfg();
  if (layer < 1 || layer > cfg.depth) {
    throw std::invalid_argument("attention layer " + std::to_string(layer) + " outside 1.." +
                                std::to_string(cfg.depth));
  }
  AttentionCapture cap;
  predict(m, images, true, &cap);
  const auto& att = cap.per_block.at(layer - 1);  // [n*H, T, T]
  const std::size_t n = images.dim(0), heads = cfg.heads, t = cfg.num_tokens(), np = cfg.num_patches();
  AttentionMaps out;
  out.layer = layer;
  out.heads = heads;
  out.grid_side = cfg.grid_side();
  const auto v = att.data();
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<std::vector<double>> per_head;
    for (std::size_t h = 0; h < heads; ++h) {
      // The class token is the last row; its patch columns come first.
      const double* row = v.data() + ((b * heads + h) * t + np) * t;
      per_head.emplace_back(row, row + np);
    }
    out.maps.push_back(std::move(per_head));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const unsigned char> pixels, std::size_t width,
               std::size_t height) {
  if (pixels.size() != width * height) throw std::invalid_argument("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<std::filesystem::path> write_attention_dump(const AttentionMaps& a, const std::filesystem::path& dir,
                                                        std::span<const std::size_t> sample_ids) {
  if (sample_ids.size() != a.maps.size()) throw std::invalid_argument("attention dump: one sample id per image");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto csv_path = dir / "attention.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv << "# class-token query row of block " << a.layer << ", softmax over all " << a.grid_side * a.grid_side + 1
      << " tokens; columns are the " << a.grid_side * a.grid_side
      << " patch keys in raster order, the class->class entry is dropped so each row sums to <= 1\n";
  csv << "sample,head,row_sum";
  for (std::size_t c = 0; c < a.grid_side * a.grid_side; ++c) csv << ",cell" << c;
  csv << '\n';
  csv << std::setprecision(17);
  for (std::size_t i = 0; i < a.maps.size(); ++i) {
    for (std::size_t h = 0; h < a.heads; ++h) {
      const auto& map = a.maps[i][h];
      const double total = std::accumulate(map.begin(), map.end(), 0.0);
      csv << sample_ids[i] << ',' << h << ',' << total;
      for (double v : map) csv << ',' << v;
      csv << '\n';
      const double mx = *std::max_element(map.begin(), map.end());
      std::vector<unsigned char> px(map.size());
      for (std::size_t c = 0; c < map.size(); ++c) {
        px[c] = static_cast<unsigned char>(mx > 0.0 ? std::lround(255.0 * map[c] / mx) : 0);
      }
      std::ostringstream name;
      name << "sample" << std::setw(6) << std::setfill('0') << sample_ids[i] << "_head" << h << ".pgm";
      write_pgm(dir / name.str(), px, a.grid_side, a.grid_side);
      written.push_back(dir / name.str());
    }
  }
  if (!csv) throw std::runtime_error("short write to " + csv_path.string());
  written.push_back(csv_path);
  return written;
}

}  // namespace udd
