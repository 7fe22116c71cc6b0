// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udd/synth.hpp"
#include "udd/trainer.hpp"

namespace udd {

/// Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly,
/// ties counted one half. O(n log n). Throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Indices of at most `max_frames` frames taken at an even stride from a
/// video of `count` frames: floor(i * count / max_frames).
std::vector<std::size_t> sample_video_frames(std::size_t count, std::size_t max_frames = 32);

/// AUC over per-video mean scores. Frames of a video keep their order of
/// appearance; each video must carry a single label.
double video_auc(std::span<const double> scores, std::span<const int> labels, std::span<const std::size_t> video_ids,
                 std::size_t max_frames = 32);

/// Fake-class softmax probability of every sample, original branch only.
/// With `cutout` set, each image first has its central square replaced by
/// `fill`.
struct CutoutOptions {
  std::size_t size = 0;
  std::vector<double> fill;
};
std::vector<double> score_dataset(const Model& m, const Dataset& ds, const std::optional<CutoutOptions>& cutout = {},
                                  std::size_t batch = 250);

struct SplitReport {
  std::string split;
  std::string data_digest;
  std::size_t samples = 0;
  std::size_t videos = 0;
  double frame_auc = 0.0;
  double video_auc = 0.0;
};

struct CutoutPoint {
  std::size_t size = 0;
  double frame_auc = 0.0;
};

struct EvalReport {
  std::string checkpoint_digest;
  std::string config_digest;
  std::vector<SplitReport> splits;
  std::string cutout_split;
  std::vector<CutoutPoint> cutout;
};

void to_json(nlohmann::json& j, const SplitReport& r);
void to_json(nlohmann::json& j, const CutoutPoint& p);
void to_json(nlohmann::json& j, const EvalReport& r);

/// Plain evaluation of one split. Throws std::logic_error if any shuffle or
/// mix spec was sampled while it ran, and std::invalid_argument when the
/// dataset images do not fit the model.
SplitReport evaluate_split(const Model& m, const Dataset& ds);

/// Frame AUC at each cutout size. Sizes must ascend from 0.
std::vector<CutoutPoint> cutout_sweep(const Model& m, const Dataset& ds, std::span<const std::size_t> sizes,
                                      std::span<const double> fill);

/// FNV-1a over the serialized training config.
std::string config_digest(const TrainConfig& cfg);

/// Class-token attention over patch tokens at one block, per image and head,
/// as grid_side x grid_side maps. The class->class entry is excluded, so each
/// map sums to at most 1.
struct AttentionMaps {
  std::size_t layer = 0;  // 1-based block index
  std::size_t heads = 0;
  std::size_t grid_side = 0;
  std::vector<std::vector<std::vector<double>>> maps;  // [image][head][cell]
};
AttentionMaps class_attention(const Model& m, const Tensor& images, std::size_t layer);

/// One PGM per (image, head) scaled so the map maximum is 255, plus
/// attention.csv with the raw values. Returns the files written.
std::vector<std::filesystem::path> write_attention_dump(const AttentionMaps& a, const std::filesystem::path& dir,
                                                        std::span<const std::size_t> sample_ids);

void write_pgm(const std::filesystem::path& path, std::span<const unsigned char> pixels, std::size_t width,
               std::size_t height);

}  // namespace udd
