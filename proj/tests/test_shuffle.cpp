// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "udd/gradcheck.hpp"
#include "udd/shuffle.hpp"

namespace udd {
namespace {

TEST(CropRect, PaperGridDefaults) {
  RngStream rng(1);
  for (int i = 0; i < 2000; ++i) {
    auto r = sample_crop_rect(rng, 14, 0.3, {0.75, 4.0 / 3.0}, {60, 196});
    EXPECT_GE(r.area(), 60u);
    EXPECT_LE(r.area(), 196u);
    EXPECT_LE(r.x + r.w, 14u);
    EXPECT_LE(r.y + r.h, 14u);
    EXPECT_GE(r.w, 1u);
    EXPECT_GE(r.h, 1u);
  }
}

TEST(CropRect, AreaFloorHoldsOnDeskGrid) {
  RngStream rng(2);
  for (int i = 0; i < 2000; ++i) {
    auto r = sample_crop_rect(rng, 8, 0.3, {0.75, 4.0 / 3.0}, {0.0, 64.0});
    EXPECT_GE(r.area(), 20u);  // ceil(0.3 * 64)
    EXPECT_LE(r.x + r.w, 8u);
    EXPECT_LE(r.y + r.h, 8u);
  }
}

TEST(CropRect, ForcedFullGrid) {
  RngStream rng(3);
  EXPECT_EQ(sample_crop_rect(rng, 14, 0.3, {1, 1}, {196, 196}), (CropRect{0, 0, 14, 14}));
}

TEST(CropRect, Deterministic) {
  RngStream a(9), b(9);
  for (int i = 0; i < 50; ++i)
    EXPECT_EQ(sample_crop_rect(a, 14, 0.3, {0.75, 4.0 / 3.0}, {60, 196}),
              sample_crop_rect(b, 14, 0.3, {0.75, 4.0 / 3.0}, {60, 196}));
}

TEST(CropRect, InfeasibleRangesRejected) {
  RngStream rng(1);
  EXPECT_THROW(sample_crop_rect(rng, 14, 0.3, {0.75, 4.0 / 3.0}, {200, 300}), std::invalid_argument);
  EXPECT_THROW(sample_crop_rect(rng, 14, 0.0, {0.75, 4.0 / 3.0}, {60, 196}), std::invalid_argument);
  EXPECT_THROW(sample_crop_rect(rng, 14, 0.3, {2, 1}, {60, 196}), std::invalid_argument);
  EXPECT_THROW(sample_crop_rect(rng, 14, 0.9, {0.75, 4.0 / 3.0}, {60, 100}), std::invalid_argument);
}

TEST(CropRect, CoversBothAspectOrientations) {
  RngStream rng(4);
  bool wide = false, tall = false;
  for (int i = 0; i < 500; ++i) {
    auto r = sample_crop_rect(rng, 14, 0.3, {0.75, 4.0 / 3.0}, {60, 196});
    wide = wide || r.w > r.h;
    tall = tall || r.h > r.w;
  }
  EXPECT_TRUE(wide && tall);
}

Tensor field(std::size_t g, std::size_t d, auto f) {
  std::vector<double> v(g * g * d);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      for (std::size_t c = 0; c < d; ++c) v[(i * g + j) * d + c] = f(i, j, c);
  return Tensor::from({g, g, d}, std::move(v));
}

TEST(InterpolatePos, FullRectIsBitwiseIdentity) {
  RngStream rng(5);
  auto pos = field(14, 3, [&](auto, auto, auto) { return rng.normal(); });
  auto out = interpolate_pos_embed(pos, {0, 0, 14, 14});
  EXPECT_EQ(out.shape(), (Shape{196, 3}));
  EXPECT_TRUE(std::ranges::equal(out.data(), pos.data()));
}

TEST(InterpolatePos, ConstantStaysConstant) {
  auto pos = field(14, 2, [](auto, auto, auto c) { return 0.25 + c; });
  auto out = interpolate_pos_embed(pos, {3, 1, 5, 9});
  for (std::size_t i = 0; i < 196; ++i) {
    EXPECT_DOUBLE_EQ(out.at({i, 0}), 0.25);
    EXPECT_DOUBLE_EQ(out.at({i, 1}), 1.25);
  }
}

TEST(InterpolatePos, ColumnRampClosedForm) {
  auto pos = field(14, 1, [](auto, auto j, auto) { return static_cast<double>(j); });
  auto out = interpolate_pos_embed(pos, {2, 4, 7, 6});
  for (std::size_t i = 0; i < 14; ++i)
    for (std::size_t j = 0; j < 14; ++j) EXPECT_NEAR(out.at({i * 14 + j, 0}), 2.0 + 6.0 * j / 13.0, 1e-12);
}

TEST(InterpolatePos, OutOfBoundsRejected) {
  auto pos = field(14, 1, [](auto, auto, auto) { return 0.0; });
  EXPECT_THROW(interpolate_pos_embed(pos, {10, 0, 5, 5}), std::invalid_argument);
  EXPECT_THROW(interpolate_pos_embed(pos, {0, 0, 0, 5}), std::invalid_argument);
}

bool is_bijection(std::vector<std::size_t> p) {
  std::ranges::sort(p);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != i) return false;
  return true;
}

TEST(BlockPermutation, SingleBlockIsIdentity) {
  RngStream rng(6);
  auto p = sample_block_permutation(rng, 14, 1);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(BlockPermutation, TwoByTwoMovesWholeBlocks) {
  RngStream rng(7);
  bool moved = false;
  for (int trial = 0; trial < 20; ++trial) {
    auto p = sample_block_permutation(rng, 14, 2);
    ASSERT_EQ(p.size(), 196u);
    EXPECT_TRUE(is_bijection(p));
    for (std::size_t i = 0; i < 196; ++i) {
      const std::size_t r = i / 14, c = i % 14, pr = p[i] / 14, pc = p[i] % 14;
      EXPECT_EQ(r % 7, pr % 7);
      EXPECT_EQ(c % 7, pc % 7);
      // Every patch of a block reads from the same source block.
      const std::size_t anchor = (r / 7) * 7 * 14 + (c / 7) * 7;
      EXPECT_EQ(pr / 7, p[anchor] / 14 / 7);
      EXPECT_EQ(pc / 7, p[anchor] % 14 / 7);
      moved = moved || p[i] != i;
    }
  }
  EXPECT_TRUE(moved);
}

TEST(BlockPermutation, PatchwiseWhenBlocksEqualGrid) {
  RngStream rng(8);
  auto p = sample_block_permutation(rng, 14, 14);
  EXPECT_TRUE(is_bijection(p));
  std::size_t fixed = 0;
  for (std::size_t i = 0; i < 196; ++i) fixed += p[i] == i;
  EXPECT_LT(fixed, 10u);
}

TEST(BlockPermutation, UniformOverBlockOrders) {
  RngStream rng(10);
  std::map<std::vector<std::size_t>, int> counts;
  const int trials = 24000;
  for (int i = 0; i < trials; ++i) ++counts[sample_block_order(rng, 2)];
  ASSERT_EQ(counts.size(), 24u);
  for (const auto& [order, c] : counts) EXPECT_NEAR(c, trials / 24.0, 5 * std::sqrt(trials / 24.0));
}

TEST(BlockPermutation, BadBlockCountRejected) {
  RngStream rng(1);
  EXPECT_THROW(sample_block_permutation(rng, 14, 3), std::invalid_argument);
  EXPECT_THROW(sample_block_permutation(rng, 14, 0), std::invalid_argument);
  const std::vector<std::size_t> dup{0, 0, 1, 2};
  EXPECT_THROW(expand_block_order(14, 2, dup), std::invalid_argument);
}

TEST(ApplyShuffle, HandEvaluatedExample) {
  auto e = Tensor::from({1, 4, 1}, {10, 20, 30, 40});
  std::vector<Tensor> pos{Tensor::from({4, 1}, {1, 2, 3, 4})};
  std::vector<std::vector<std::size_t>> perm{{1, 0, 3, 2}};
  auto t = shuffle_patch_tokens(e, pos, perm);
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{21, 12, 43, 34}));
}

TEST(ApplyShuffle, GridTwoBlockOrderMatchesHandPermutation) {
  // On a 2x2 grid with s=2 each block is one patch, so the block order is the
  // patch permutation itself.
  const std::vector<std::size_t> order{1, 0, 3, 2};
  EXPECT_EQ(expand_block_order(2, 2, order), order);
}

TEST(ApplyShuffle, IdentitySpecCollapsesToOriginalBranch) {
  ViTConfig cfg;
  auto bb = init_frozen_backbone(cfg, 4);
  RngStream rng(2);
  std::vector<double> px(2 * 3 * 32 * 32);
  for (auto& v : px) v = rng.uniform();
  auto e = patch_embed(Tensor::from({2, 3, 32, 32}, std::move(px)), bb);
  std::vector<ShuffleSpec> specs(2, identity_shuffle_spec(8));
  auto shuffled = apply_shuffle(e, bb, specs);
  auto original = embed_tokens(e, bb);
  EXPECT_TRUE(std::ranges::equal(shuffled.data(), original.data()));
}

TEST(ApplyShuffle, PreservesPatchMultisetAndClassToken) {
  ViTConfig cfg;
  auto bb = init_frozen_backbone(cfg, 4);
  RngStream rng(3);
  std::vector<double> ev(64 * 32);
  for (auto& v : ev) v = rng.normal();
  auto e = Tensor::from({1, 64, 32}, ev);
  auto spec = sample_shuffle_spec(rng, 8, {});
  auto t = apply_shuffle(e, bb, std::span(&spec, 1));
  ASSERT_EQ(t.shape(), (Shape{1, 65, 32}));
  auto pos = interpolate_pos_embed(bb.pos_patch_grid(), spec.rect);
  std::vector<std::vector<double>> got, want;
  for (std::size_t i = 0; i < 64; ++i) {
    std::vector<double> row(32), orig(ev.begin() + static_cast<long>(i * 32), ev.begin() + static_cast<long>(i * 32 + 32));
    for (std::size_t j = 0; j < 32; ++j) row[j] = t.at({0, i, j}) - pos.at({i, j});
    for (auto& v : row) v = std::round(v * 1e9) / 1e9;
    for (auto& v : orig) v = std::round(v * 1e9) / 1e9;
    got.push_back(row);
    want.push_back(orig);
  }
  std::ranges::sort(got);
  std::ranges::sort(want);
  EXPECT_EQ(got, want);
  const auto cls = bb.cls_token.data();
  const auto pc = bb.pos_cls();
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(t.at({0, 64, j}), cls[j] + pc.data()[j]);
}

TEST(ApplyShuffle, SampledSpecsSatisfyInvariants) {
  RngStream rng(12);
  ShuffleParams params;
  for (int i = 0; i < 500; ++i) {
    auto s = sample_shuffle_spec(rng, 8, params);
    EXPECT_TRUE(is_bijection(s.perm));
    EXPECT_GE(s.rect.area(), 20u);
  }
}

TEST(ApplyShuffle, GradientFlowsToPatchTokens) {
  RngStream rng(13);
  std::vector<double> ev(2 * 4 * 3);
  for (auto& v : ev) v = rng.normal();
  auto e = Tensor::from({2, 4, 3}, ev, true);
  std::vector<Tensor> pos{Tensor::from({4, 3}, std::vector<double>(12, 0.5)),
                          Tensor::from({4, 3}, std::vector<double>(12, -0.25))};
  std::vector<std::vector<std::size_t>> perms{{2, 3, 0, 1}, {1, 0, 3, 2}};
  auto w = Tensor::from({2, 4, 3}, [&] {
    std::vector<double> v(24);
    for (auto& x : v) x = rng.normal();
    return v;
  }());
  auto report = check_gradients(
      [&](const Tensor& x) {
        auto t = shuffle_patch_tokens(x, pos, perms);
        return sum(mul(mul(t, t), w));
      },
      e, 1e-5, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(ShuffleSpecJson, RoundTrip) {
  RngStream rng(14);
  auto spec = sample_shuffle_spec(rng, 8, {});
  nlohmann::json j = spec;
  EXPECT_TRUE(j.contains("rect"));
  EXPECT_TRUE(j.contains("block_order"));
  auto back = j.get<ShuffleSpec>();
  EXPECT_EQ(back, spec);
  j["block_order"] = {0, 0, 1, 2};
  EXPECT_THROW(j.get<ShuffleSpec>(), std::invalid_argument);
}

}  // namespace
}  // namespace udd
