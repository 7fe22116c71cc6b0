// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json_fwd.hpp>
#include <span>
#include <utility>
#include <vector>

#include "udd/rng.hpp"
#include "udd/tensor.hpp"
#include "udd/vit.hpp"

namespace udd {

/// Sub-rectangle of the patch grid, in grid cells.
struct CropRect {
  std::size_t x = 0, y = 0, w = 0, h = 0;

  double aspect() const { return static_cast<double>(w) / static_cast<double>(h); }
  std::size_t area() const { return w * h; }
  bool operator==(const CropRect&) const = default;
};

struct ShuffleParams {
  std::size_t blocks_per_side = 2;                // s
  double min_area_frac = 0.3;
  std::pair<double, double> ratio{0.75, 4.0 / 3.0};
  /// Crop area bounds as fractions of the grid area.
  std::pair<double, double> area_frac{60.0 / 196.0, 1.0};
};

/// One sample's shuffle: a crop for the position field plus a block order.
/// `perm[i]` is the source patch whose token lands at raster slot i.
struct ShuffleSpec {
  std::size_t grid_side = 0;
  CropRect rect;
  std::size_t s = 1;
  std::vector<std::size_t> block_order;  // block b takes its tokens from block block_order[b]
  std::vector<std::size_t> perm;

  bool operator==(const ShuffleSpec&) const = default;
};

void to_json(nlohmann::json& j, const CropRect& r);
void from_json(const nlohmann::json& j, CropRect& r);
void to_json(nlohmann::json& j, const ShuffleSpec& s);
/// Rebuilds `perm` from the block order and validates everything.
void from_json(const nlohmann::json& j, ShuffleSpec& s);

/// `area_range` is in grid cells. The effective lower bound is the larger of
/// area_range.first and min_area_frac * N; w and h round half up and clamp to
/// the grid. Draws that land below the floor are retried up to 16 times, then
/// the full grid is returned.
CropRect sample_crop_rect(RngStream& rng, std::size_t grid_side, double min_area_frac,
                          std::pair<double, double> ratio_range, std::pair<double, double> area_range);

/// Crops a [g, g, D] field to `rect` and resizes it back to g x g, returned
/// as [g*g, D] in raster order.
Tensor interpolate_pos_embed(const Tensor& pos_grid, const CropRect& rect);

/// Uniform order of the s*s blocks.
std::vector<std::size_t> sample_block_order(RngStream& rng, std::size_t s);
/// Patch-level bijection for a block order; in-block offsets are preserved.
std::vector<std::size_t> expand_block_order(std::size_t grid_side, std::size_t s,
                                            std::span<const std::size_t> block_order);
std::vector<std::size_t> sample_block_permutation(RngStream& rng, std::size_t grid_side, std::size_t s);

ShuffleSpec sample_shuffle_spec(RngStream& rng, std::size_t grid_side, const ShuffleParams& params);

/// Process-wide count of sampled shuffle and mix specs. Evaluation checks it
/// stays constant.
std::uint64_t augmentation_draws();
void note_augmentation_draw();
ShuffleSpec identity_shuffle_spec(std::size_t grid_side);

/// t_i = pos'_i + e_perm(i) per sample. e: [n, N, D]; each pos_prime entry
/// is [N, D]. Returns patch tokens [n, N, D]; gradient flows to e.
Tensor shuffle_patch_tokens(const Tensor& e, std::span<const Tensor> pos_prime,
                            std::span<const std::vector<std::size_t>> perms);

/// Full shuffle-branch token set [n, N+1, D]; the class token keeps its own
/// position embedding.
Tensor apply_shuffle(const Tensor& e, const FrozenBackbone& bb, std::span<const ShuffleSpec> specs);

}  // namespace udd
