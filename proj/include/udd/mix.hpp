// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "udd/rng.hpp"
#include "udd/tensor.hpp"

namespace udd {

enum class Stage { early, mid, late };
Stage parse_stage(const std::string& name);
const char* stage_name(Stage s);

/// Blocks 1..L-1 cut into three contiguous ranges (inclusive, 1-based) whose
/// sizes differ by at most one; earlier ranges take the remainder. At depth 3
/// the late range is empty (first > last).
struct StagePartition {
  std::array<std::pair<std::size_t, std::size_t>, 3> ranges;

  static StagePartition of(std::size_t depth);
  std::pair<std::size_t, std::size_t> range(Stage s) const { return ranges[static_cast<std::size_t>(s)]; }
};

std::size_t select_mix_layer(RngStream& rng, std::size_t depth, Stage stage = Stage::mid);

/// For each sample, a uniformly chosen different sample with the same label,
/// or itself when its label is unique in the batch.
std::vector<std::size_t> pair_samples(std::span<const int> labels, RngStream& rng);

/// floor(gamma * N), guarded against representation error.
std::size_t mix_count(double gamma, std::size_t num_patches);

/// Per-step mixing plan. For target sample b, patch slot dropped[b][j] is
/// replaced by patch src[b][j] of sample pairing[b]. Slots are patch indices;
/// the class token (index N) is never touched.
struct MixSpec {
  std::size_t layer = 0;
  double gamma = 0.0;
  std::size_t num_patches = 0;
  std::vector<std::size_t> pairing;
  std::vector<std::vector<std::size_t>> dropped;
  std::vector<std::vector<std::size_t>> src;

  std::size_t batch() const { return pairing.size(); }
  /// Retained target patch indices, ascending.
  std::vector<std::size_t> kept(std::size_t b) const;
  /// Throws if counts, ranges, or label pairing are inconsistent.
  void validate(std::span<const int> labels) const;
  bool operator==(const MixSpec&) const = default;
};

void to_json(nlohmann::json& j, const MixSpec& m);
void from_json(const nlohmann::json& j, MixSpec& m);

struct MixDraw {
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> src;
};
/// Uniform k-subset of target slots (ascending) and a uniform ordered
/// k-subset of source patches.
MixDraw sample_mix_draw(RngStream& rng, std::size_t num_patches, double gamma);

MixSpec sample_mix_spec(RngStream& rng, std::span<const int> labels, std::size_t depth, std::size_t num_patches,
                        double gamma, Stage stage = Stage::mid);

/// Mixes a whole batch of layer-l token sets [n, N+1, D] in one gather, so
/// gradient reaches both target and source rows.
Tensor mix_batch(const Tensor& tokens, const MixSpec& spec);

/// Single pair: tgt and src are [N+1, D]. Returns the mixed set [N+1, D].
Tensor mix_tokens(const Tensor& tgt, const Tensor& src, double gamma, RngStream& rng);

}  // namespace udd
