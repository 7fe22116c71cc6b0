// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "udd/rng.hpp"
#include "udd/tensor.hpp"

namespace udd {

struct ViTConfig {
  std::size_t image_side = 32;
  std::size_t patch_side = 4;
  std::size_t channels = 3;
  std::size_t dim = 32;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t lora_rank = 4;

  std::size_t grid_side() const { return image_side / patch_side; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  /// Patch tokens plus the class token, which sits last.
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t mlp_dim() const { return dim * mlp_ratio; }
  std::size_t patch_len() const { return channels * patch_side * patch_side; }

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
  bool operator==(const ViTConfig&) const = default;
};

/// The six projections of a block that carry adapters.
enum class Proj : std::uint8_t { query, key, value, out, mlp_in, mlp_out };
inline constexpr std::array<Proj, 6> kAllProj{Proj::query, Proj::key,    Proj::value,
                                              Proj::out,   Proj::mlp_in, Proj::mlp_out};
const char* proj_name(Proj p);

struct FrozenBlock {
  Tensor norm1_gain, norm1_bias;
  std::array<Tensor, 6> weight;  // indexed by Proj; stored [in, out] for x * W
  std::array<Tensor, 6> bias;
  Tensor norm2_gain, norm2_bias;

  const Tensor& w(Proj p) const { return weight[static_cast<std::size_t>(p)]; }
  const Tensor& b(Proj p) const { return bias[static_cast<std::size_t>(p)]; }
};

/// Pretrained-weight stand-in. Every tensor has requires_grad = false and is
/// never written after construction.
struct FrozenBackbone {
  ViTConfig cfg;
  std::uint64_t seed = 0;
  Tensor patch_weight;  // [patch_len, dim]
  Tensor patch_bias;    // [dim]
  Tensor cls_token;     // [dim]
  Tensor pos_embed;     // [num_tokens, dim]; row num_patches is the class slot
  std::vector<FrozenBlock> blocks;
  Tensor final_gain, final_bias;

  /// Patch rows of pos_embed as a [grid, grid, dim] field.
  Tensor pos_patch_grid() const;
  /// Class-slot position embedding, [dim].
  Tensor pos_cls() const;

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  /// 64-bit FNV-1a over every frozen tensor's bytes, as 16 hex digits.
  std::string digest() const;
};

FrozenBackbone init_frozen_backbone(const ViTConfig& cfg, std::uint64_t seed);

/// Low-rank update dW = A B^T for a frozen [d1, d2] matrix.
struct LoraAdapter {
  Tensor a;  // [d1, r]
  Tensor b;  // [d2, r]
  std::size_t block = 0;
  Proj target = Proj::query;

  Tensor delta() const;
};

class AdapterSet {
 public:
  AdapterSet() = default;
  /// A ~ N(0, 1/d1) scaled by `a_scale`, B = 0, so the initial update is zero.
  static AdapterSet init(const ViTConfig& cfg, RngStream rng, double a_scale = 1.0);

  const LoraAdapter& get(std::size_t block, Proj p) const;
  LoraAdapter& get(std::size_t block, Proj p);
  std::vector<LoraAdapter>& all() { return adapters_; }
  const std::vector<LoraAdapter>& all() const { return adapters_; }
  std::size_t size() const { return adapters_.size(); }

 private:
  std::vector<LoraAdapter> adapters_;  // block-major, Proj order within a block
};

/// [n, C, H, W] pixel tensor to patch tokens e: [n, N, D], raster order.
Tensor patch_embed(const Tensor& images, const FrozenBackbone& bb);

/// Original-branch token set: t_i = pos_i + e_i, class token = cls + pos_cls.
/// e: [n, N, D] -> [n, N+1, D].
Tensor embed_tokens(const Tensor& e, const FrozenBackbone& bb);

/// Appends cls + pos_cls to per-sample patch tokens [n, N, D].
Tensor append_class_token(const Tensor& patch_tokens, const FrozenBackbone& bb);

struct AttentionCapture {
  std::vector<Tensor> per_block;  // each [n * heads, T, T], values only
};

/// One pre-norm transformer block with optional adapters on all six
/// projections. `adapters` may be null for the frozen-only path.
Tensor block_forward(const Tensor& tokens, const FrozenBlock& block, const ViTConfig& cfg,
                     const AdapterSet* adapters, std::size_t block_index,
                     Tensor* attention_out = nullptr);

struct LayerHook {
  std::size_t layer = 0;  // runs after block `layer` (1-based), 1 <= layer <= depth-1
  std::function<Tensor(const Tensor&)> transform;
};

struct ForwardResult {
  Tensor cls;  // [n, D], after the final norm
  AttentionCapture attention;
};

ForwardResult model_forward(const Tensor& tokens, const FrozenBackbone& bb, const AdapterSet* adapters,
                            const std::optional<LayerHook>& hook = std::nullopt,
                            bool capture_attention = false);

/// Blocks first..last (1-based, inclusive) applied in order; an empty range
/// returns the input.
Tensor run_blocks(const Tensor& tokens, std::size_t first, std::size_t last, const FrozenBackbone& bb,
                  const AdapterSet* adapters);

/// Final norm of the class rows of a full token set: [n, N+1, D] -> [n, D].
Tensor final_class_token(const Tensor& tokens, const FrozenBackbone& bb);

}  // namespace udd
