// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/shuffle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <string>

namespace udd {

namespace {

std::size_t round_half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

void check_blocks(std::size_t grid_side, std::size_t s) {
  if (s == 0 || grid_side % s != 0) {
    throw std::invalid_argument("shuffle: " + std::to_string(s) + " blocks per side do not divide grid " +
                                std::to_string(grid_side));
  }
}

void check_rect(const CropRect& r, std::size_t grid_side) {
  if (r.w == 0 || r.h == 0 || r.x + r.w > grid_side || r.y + r.h > grid_side) {
    throw std::invalid_argument("CropRect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                                std::to_string(r.w) + "," + std::to_string(r.h) + ") outside grid " +
                                std::to_string(grid_side));
  }
}

}  // namespace

void to_json(nlohmann::json& j, const CropRect& r) {
  j = {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

void from_json(const nlohmann::json& j, CropRect& r) {
  r.x = j.at("x").get<std::size_t>();
  r.y = j.at("y").get<std::size_t>();
  r.w = j.at("w").get<std::size_t>();
  r.h = j.at("h").get<std::size_t>();
}

void to_json(nlohmann::json& j, const ShuffleSpec& s) {
  j = {{"grid_side", s.grid_side}, {"rect", s.rect}, {"s", s.s}, {"block_order", s.block_order}};
}

void from_json(const nlohmann::json& j, ShuffleSpec& s) {
  s.grid_side = j.at("grid_side").get<std::size_t>();
  s.rect = j.at("rect").get<CropRect>();
  s.s = j.at("s").get<std::size_t>();
  s.block_order = j.at("block_order").get<std::vector<std::size_t>>();
  check_rect(s.rect, s.grid_side);
  s.perm = expand_block_order(s.grid_side, s.s, s.block_order);
}

CropRect sample_crop_rect(RngStream& rng, std::size_t grid_side, double min_area_frac,
                          std::pair<double, double> ratio_range, std::pair<double, double> area_range) {
  if (grid_side == 0) throw std::invalid_argument("sample_crop_rect: empty grid");
  if (!(min_area_frac > 0.0 && min_area_frac <= 1.0)) {
    throw std::invalid_argument("sample_crop_rect: min_area_frac must be in (0, 1], got " +
                                std::to_string(min_area_frac));
  }
  if (!(ratio_range.first > 0.0 && ratio_range.first <= ratio_range.second)) {
    throw std::invalid_argument("sample_crop_rect: bad aspect ratio range");
  }
  const double n = static_cast<double>(grid_side * grid_side);
  const double lo = std::max(area_range.first, min_area_frac * n);
  const double hi = std::min(area_range.second, n);
  if (!(lo <= hi)) {
    throw std::invalid_argument("sample_crop_rect: area range [" + std::to_string(area_range.first) + ", " +
                                std::to_string(area_range.second) + "] infeasible on grid " +
                                std::to_string(grid_side));
  }
  const auto floor_cells = static_cast<std::size_t>(std::ceil(lo - 1e-9));

  for (int attempt = 0; attempt < 16; ++attempt) {
    const double rho = rng.uniform(ratio_range.first, ratio_range.second);
    const double area = rng.uniform(lo, hi);
    const std::size_t w = std::clamp<std::size_t>(round_half_up(std::sqrt(area * rho)), 1, grid_side);
    const std::size_t h = std::clamp<std::size_t>(round_half_up(std::sqrt(area / rho)), 1, grid_side);
    if (w * h < floor_cells) continue;
    CropRect r{0, 0, w, h};
    r.x = rng.below(grid_side - w + 1);
    r.y = rng.below(grid_side - h + 1);
    return r;
  }
  return {0, 0, grid_side, grid_side};
}

Tensor interpolate_pos_embed(const Tensor& pos_grid, const CropRect& rect) {
  if (pos_grid.rank() != 3 || pos_grid.dim(0) != pos_grid.dim(1)) {
    throw std::invalid_argument("interpolate_pos_embed: expected [g,g,D], got " + shape_str(pos_grid.shape()));
  }
  const std::size_t g = pos_grid.dim(0), d = pos_grid.dim(2);
  check_rect(rect, g);
  const auto src = pos_grid.data();
  std::vector<double> crop(rect.h * rect.w * d);
  for (std::size_t i = 0; i < rect.h; ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(((rect.y + i) * g + rect.x) * d), rect.w * d,
                crop.begin() + static_cast<std::ptrdiff_t>(i * rect.w * d));
  auto resized = bilinear_resize_grid(Tensor::from({rect.h, rect.w, d}, std::move(crop)), g, g);
  return reshape(resized, {g * g, d});
}

std::vector<std::size_t> sample_block_order(RngStream& rng, std::size_t s) {
  std::vector<std::size_t> order(s * s);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> expand_block_order(std::size_t grid_side, std::size_t s,
                                            std::span<const std::size_t> block_order) {
  check_blocks(grid_side, s);
  if (block_order.size() != s * s) {
    throw std::invalid_argument("expand_block_order: expected " + std::to_string(s * s) + " blocks, got " +
                                std::to_string(block_order.size()));
  }
  std::vector<bool> seen(s * s, false);
  for (auto b : block_order) {
    if (b >= s * s || seen[b]) throw std::invalid_argument("expand_block_order: block order is not a permutation");
    seen[b] = true;
  }
  const std::size_t side = grid_side / s;
  std::vector<std::size_t> perm(grid_side * grid_side);
  for (std::size_t r = 0; r < grid_side; ++r)
    for (std::size_t c = 0; c < grid_side; ++c) {
      const std::size_t from = block_order[(r / side) * s + c / side];
      const std::size_t fr = (from / s) * side + r % side, fc = (from % s) * side + c % side;
      perm[r * grid_side + c] = fr * grid_side + fc;
    }
  return perm;
}

std::vector<std::size_t> sample_block_permutation(RngStream& rng, std::size_t grid_side, std::size_t s) {
  check_blocks(grid_side, s);
  return expand_block_order(grid_side, s, sample_block_order(rng, s));
}

namespace {
std::atomic<std::uint64_t> g_augmentation_draws{0};
}  // namespace

std::uint64_t augmentation_draws() { return g_augmentation_draws.load(); }
void note_augmentation_draw() { g_augmentation_draws.fetch_add(1); }

ShuffleSpec sample_shuffle_spec(RngStream& rng, std::size_t grid_side, const ShuffleParams& params) {
  note_augmentation_draw();
  check_blocks(grid_side, params.blocks_per_side);
  const double n = static_cast<double>(grid_side * grid_side);
  ShuffleSpec spec;
  spec.grid_side = grid_side;
  spec.rect = sample_crop_rect(rng, grid_side, params.min_area_frac, params.ratio,
                               {params.area_frac.first * n, params.area_frac.second * n});
  spec.s = params.blocks_per_side;
  spec.block_order = sample_block_order(rng, spec.s);
  spec.perm = expand_block_order(grid_side, spec.s, spec.block_order);
  return spec;
}

ShuffleSpec identity_shuffle_spec(std::size_t grid_side) {
  ShuffleSpec spec;
  spec.grid_side = grid_side;
  spec.rect = {0, 0, grid_side, grid_side};
  spec.s = 1;
  spec.block_order = {0};
  spec.perm = expand_block_order(grid_side, 1, spec.block_order);
  return spec;
}

Tensor shuffle_patch_tokens(const Tensor& e, std::span<const Tensor> pos_prime,
                            std::span<const std::vector<std::size_t>> perms) {
  if (e.rank() != 3) throw std::invalid_argument("shuffle_patch_tokens: e must be [n,N,D], got " + shape_str(e.shape()));
  const std::size_t n = e.dim(0), np = e.dim(1), d = e.dim(2);
  if (pos_prime.size() != n || perms.size() != n) {
    throw std::invalid_argument("shuffle_patch_tokens: need one position field and permutation per sample");
  }
  std::vector<std::size_t> rows(n * np);
  std::vector<double> pos(n * np * d);
  for (std::size_t b = 0; b < n; ++b) {
    if (perms[b].size() != np) throw std::invalid_argument("shuffle_patch_tokens: permutation length mismatch");
    if (pos_prime[b].shape() != Shape{np, d}) {
      throw std::invalid_argument("shuffle_patch_tokens: position field " + shape_str(pos_prime[b].shape()) +
                                  " vs [" + std::to_string(np) + "," + std::to_string(d) + "]");
    }
    for (std::size_t i = 0; i < np; ++i) rows[b * np + i] = b * np + perms[b][i];
    std::ranges::copy(pos_prime[b].data(), pos.begin() + static_cast<std::ptrdiff_t>(b * np * d));
  }
  auto moved = gather_rows(reshape(e, {n * np, d}), rows);
  return reshape(add(moved, Tensor::from({n * np, d}, std::move(pos))), {n, np, d});
}

Tensor apply_shuffle(const Tensor& e, const FrozenBackbone& bb, std::span<const ShuffleSpec> specs) {
  const std::size_t g = bb.cfg.grid_side();
  const auto grid = bb.pos_patch_grid();
  std::vector<Tensor> pos;
  std::vector<std::vector<std::size_t>> perms;
  for (const auto& s : specs) {
    if (s.grid_side != g) {
      throw std::invalid_argument("apply_shuffle: spec grid " + std::to_string(s.grid_side) + " vs model grid " +
                                  std::to_string(g));
    }
    pos.push_back(interpolate_pos_embed(grid, s.rect));
    perms.push_back(s.perm);
  }
  return append_class_token(shuffle_patch_tokens(e, pos, perms), bb);
}

}  // namespace udd
