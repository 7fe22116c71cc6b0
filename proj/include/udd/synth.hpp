// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "udd/rng.hpp"
#include "udd/tensor.hpp"

namespace udd {

struct ImageConfig {
  std::size_t side = 32;
  std::size_t channels = 3;
  std::size_t cell = 4;  // artifact cell side, equal to the model patch
  std::size_t num_contents = 8;
  double artifact_amplitude = 1.0;
  double artifact_alpha = 0.5;
  double noise = 0.01;
  double jitter = 0.01;  // per-frame brightness offset range

  std::size_t grid_side() const { return side / cell; }
  std::size_t num_cells() const { return grid_side() * grid_side(); }
  std::size_t pixels() const { return channels * side * side; }
  void validate() const;
  bool operator==(const ImageConfig&) const = default;
};

/// Cells of the middle 2x2 block of the grid.
std::vector<std::size_t> center_cells(std::size_t grid_side);
bool is_center_cell(std::size_t cell, std::size_t grid_side);

struct SynthFactors {
  int forged = 0;
  std::size_t content = 0;
  std::optional<std::size_t> cell;  // set iff forged

  bool operator==(const SynthFactors&) const = default;
};

struct SynthSample {
  std::vector<double> pixels;  // [C, H, W], multiples of 1/255
  int label = 0;
  std::size_t video_id = 0;
  std::size_t frame = 0;
  SynthFactors factors;
};

/// Renders one frame. Pixel values are quantised to 8 bits so a PPM round
/// trip is exact.
SynthSample generate_sample(const SynthFactors& f, RngStream rng, const ImageConfig& cfg);

/// Mean squared 2x2 checker response (+a -b -c +d) over windows inside the
/// cell, averaged over channels.
double cell_hf_energy(std::span<const double> pixels, const ImageConfig& cfg, std::size_t cell);

/// Energy bound separating clean cells from artifact cells under `cfg`.
double hf_threshold(const ImageConfig& cfg);

struct BiasSpec {
  double pos = 0.9;      // P(fake artifact in the center block)
  double content = 0.9;  // P(content parity == label)

  void validate() const;
  /// Parses "pos=0.9,content=0.9"; either key may be omitted.
  static BiasSpec parse(const std::string& text);
  bool operator==(const BiasSpec&) const = default;
};

enum class Split { train, iid, shifted };
Split parse_split(const std::string& name);
const char* split_name(Split s);

inline constexpr std::size_t kFramesPerVideo = 8;

struct Dataset {
  ImageConfig image;
  BiasSpec bias;
  Split split = Split::train;
  std::uint64_t seed = 0;
  std::vector<SynthSample> samples;

  std::size_t size() const { return samples.size(); }
  /// FNV-1a over the header fields and every sample's label, ids and pixels.
  std::string digest() const;
  /// Images [rows.size(), C, H, W] and labels for the given sample indices.
  Tensor batch_images(std::span<const std::size_t> rows) const;
  std::vector<int> batch_labels(std::span<const std::size_t> rows) const;
  /// Per-channel pixel means over the whole set.
  std::vector<double> channel_means() const;
};

/// Draws factors for n frames (n/8 videos rounded up, labels alternating by
/// video) and renders them. Train and iid use `bias`; shifted puts fake
/// artifacts on off-center cells and draws content independently of label.
Dataset generate_dataset(std::size_t n, const BiasSpec& bias, Split split, std::uint64_t seed,
                         const ImageConfig& cfg = {});

/// Writes images/NNNNNN.ppm plus manifest.jsonl under dir.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Reads and validates a dataset directory. Unknown manifest fields are
/// reported on `warnings` and otherwise ignored.
Dataset load_dataset(const std::filesystem::path& dir, std::ostream* warnings = nullptr);

void write_ppm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t side);
std::vector<double> read_ppm(const std::filesystem::path& path, std::size_t expected_side);

/// Replaces the central s x s square with `fill` (one value per channel).
std::vector<double> cutout_center(std::span<const double> pixels, const ImageConfig& cfg, std::size_t s,
                                  std::span<const double> fill);

}  // namespace udd
