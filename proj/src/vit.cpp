// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/vit.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "udd/digest.hpp"

namespace udd {

namespace {

constexpr double kNormEps = 1e-6;

Tensor gaussian(RngStream& rng, Shape shape, double stddev) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

// Smooth random position field standing in for learned embeddings, which are
// smooth over the grid in pretrained ViTs: each channel is a low-frequency
// plane wave with random direction and phase.
std::vector<double> smooth_position_field(RngStream& rng, std::size_t grid, std::size_t dim,
                                          double amplitude) {
  std::vector<double> v(grid * grid * dim);
  for (std::size_t c = 0; c < dim; ++c) {
    const double fx = rng.uniform(-1.5, 1.5);
    const double fy = rng.uniform(-1.5, 1.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < grid; ++y)
      for (std::size_t x = 0; x < grid; ++x) {
        const double t = 2.0 * std::numbers::pi *
                         (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                         static_cast<double>(grid);
        v[(y * grid + x) * dim + c] = amplitude * std::sin(t + phase);
      }
  }
  return v;
}

Tensor effective_weight(const FrozenBlock& block, const AdapterSet* adapters, std::size_t index,
                        Proj p) {
  if (adapters == nullptr) return block.w(p);
  return add(block.w(p), adapters->get(index, p).delta());
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

}  // namespace

void ViTConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ViTConfig: " + m); };
  if (patch_side == 0 || image_side == 0) fail("image_side and patch_side must be positive");
  if (image_side % patch_side != 0) {
    fail("patch_side " + std::to_string(patch_side) + " does not divide image_side " +
         std::to_string(image_side));
  }
  if (channels == 0) fail("channels must be positive");
  if (heads == 0 || dim % heads != 0) {
    fail("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (depth < 3) fail("depth must be at least 3, got " + std::to_string(depth));
  if (lora_rank < 1) fail("lora_rank must be at least 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be at least 1");
}

const char* proj_name(Proj p) {
  switch (p) {
    case Proj::query: return "query";
    case Proj::key: return "key";
    case Proj::value: return "value";
    case Proj::out: return "out";
    case Proj::mlp_in: return "mlp_in";
    case Proj::mlp_out: return "mlp_out";
  }
  return "?";
}

Tensor FrozenBackbone::pos_patch_grid() const {
  const std::size_t g = cfg.grid_side(), n = cfg.num_patches(), d = cfg.dim;
  std::vector<double> v(pos_embed.data().begin(), pos_embed.data().begin() + n * d);
  return Tensor::from({g, g, d}, std::move(v));
}

Tensor FrozenBackbone::pos_cls() const {
  const std::size_t n = cfg.num_patches(), d = cfg.dim;
  std::vector<double> v(pos_embed.data().begin() + n * d, pos_embed.data().end());
  return Tensor::from({d}, std::move(v));
}

std::vector<std::pair<std::string, Tensor>> FrozenBackbone::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"patch_weight", patch_weight}, {"patch_bias", patch_bias}, {"cls_token", cls_token},
      {"pos_embed", pos_embed}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.emplace_back(p + "norm1_gain", b.norm1_gain);
    out.emplace_back(p + "norm1_bias", b.norm1_bias);
    for (Proj pr : kAllProj) {
      out.emplace_back(p + proj_name(pr) + ".weight", b.w(pr));
      out.emplace_back(p + proj_name(pr) + ".bias", b.b(pr));
    }
    out.emplace_back(p + "norm2_gain", b.norm2_gain);
    out.emplace_back(p + "norm2_bias", b.norm2_bias);
  }
  out.emplace_back("final_gain", final_gain);
  out.emplace_back("final_bias", final_bias);
  return out;
}

std::string FrozenBackbone::digest() const {
  Fnv1a h;
  for (const auto& [name, t] : named_tensors()) {
    h.update(name);
    for (auto e : t.shape()) h.update(std::uint64_t{e});
    h.update(t.data());
  }
  return h.hex();
}

FrozenBackbone init_frozen_backbone(const ViTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  FrozenBackbone bb;
  bb.cfg = cfg;
  bb.seed = seed;
  RngStream root(seed, 0xB0B0);
  const std::size_t d = cfg.dim, g = cfg.grid_side(), hidden = cfg.mlp_dim();

  auto rng = root.split(1);
  bb.patch_weight = gaussian(rng, {cfg.patch_len(), d}, 1.0 / std::sqrt(static_cast<double>(cfg.patch_len())));
  bb.patch_bias = gaussian(rng, {d}, 0.02);
  bb.cls_token = gaussian(rng, {d}, 0.5);

  auto pos_rng = root.split(2);
  auto pos = smooth_position_field(pos_rng, g, d, 0.5);
  for (std::size_t c = 0; c < d; ++c) pos.push_back(0.02 * pos_rng.normal());
  bb.pos_embed = Tensor::from({cfg.num_tokens(), d}, std::move(pos));

  for (std::size_t i = 0; i < cfg.depth; ++i) {
    auto br = root.split({3, i});
    FrozenBlock blk;
    blk.norm1_gain = Tensor::full({d}, 1.0);
    blk.norm1_bias = Tensor::zeros({d});
    blk.norm2_gain = Tensor::full({d}, 1.0);
    blk.norm2_bias = Tensor::zeros({d});
    for (Proj p : kAllProj) {
      const std::size_t in = p == Proj::mlp_out ? hidden : d;
      const std::size_t out = p == Proj::mlp_in ? hidden : d;
      blk.weight[static_cast<std::size_t>(p)] = gaussian(br, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
      blk.bias[static_cast<std::size_t>(p)] = gaussian(br, {out}, 0.02);
    }
    bb.blocks.push_back(std::move(blk));
  }
  bb.final_gain = Tensor::full({d}, 1.0);
  bb.final_bias = Tensor::zeros({d});
  return bb;
}

Tensor LoraAdapter::delta() const { return matmul(a, transpose(b)); }

AdapterSet AdapterSet::init(const ViTConfig& cfg, RngStream rng, double a_scale) {
  cfg.validate();
  AdapterSet set;
  const std::size_t d = cfg.dim, hidden = cfg.mlp_dim(), r = cfg.lora_rank;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    for (Proj p : kAllProj) {
      const std::size_t d1 = p == Proj::mlp_out ? hidden : d;
      const std::size_t d2 = p == Proj::mlp_in ? hidden : d;
      LoraAdapter ad;
      ad.a = gaussian(rng, {d1, r}, a_scale / std::sqrt(static_cast<double>(d1)));
      ad.a.set_requires_grad(true);
      ad.b = Tensor::zeros({d2, r}, true);
      ad.block = i;
      ad.target = p;
      set.adapters_.push_back(std::move(ad));
    }
  }
  return set;
}

const LoraAdapter& AdapterSet::get(std::size_t block, Proj p) const {
  const std::size_t idx = block * kAllProj.size() + static_cast<std::size_t>(p);
  if (idx >= adapters_.size()) throw std::out_of_range("AdapterSet: no adapter for block " + std::to_string(block));
  return adapters_[idx];
}

LoraAdapter& AdapterSet::get(std::size_t block, Proj p) {
  return const_cast<LoraAdapter&>(std::as_const(*this).get(block, p));
}

Tensor patch_embed(const Tensor& images, const FrozenBackbone& bb) {
  const auto& cfg = bb.cfg;
  if (images.rank() != 4 || images.dim(1) != cfg.channels || images.dim(2) != cfg.image_side ||
      images.dim(3) != cfg.image_side) {
    throw std::invalid_argument("patch_embed: images " + shape_str(images.shape()) + " do not match [n," +
                                std::to_string(cfg.channels) + "," + std::to_string(cfg.image_side) + "," +
                                std::to_string(cfg.image_side) + "]");
  }
  const std::size_t n = images.dim(0), g = cfg.grid_side(), p = cfg.patch_side, c = cfg.channels,
                    s = cfg.image_side, len = cfg.patch_len();
  std::vector<double> patches(n * g * g * len);
  const auto px = images.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t gy = 0; gy < g; ++gy)
      for (std::size_t gx = 0; gx < g; ++gx) {
        double* dst = patches.data() + ((b * g + gy) * g + gx) * len;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t py = 0; py < p; ++py)
            for (std::size_t pxx = 0; pxx < p; ++pxx)
              *dst++ = px[((b * c + ch) * s + gy * p + py) * s + gx * p + pxx];
      }
  auto flat = Tensor::from({n * g * g, len}, std::move(patches));
  return reshape(linear(flat, bb.patch_weight, bb.patch_bias), {n, g * g, cfg.dim});
}

Tensor append_class_token(const Tensor& patch_tokens, const FrozenBackbone& bb) {
  const std::size_t n = patch_tokens.dim(0), d = bb.cfg.dim;
  const auto cls = bb.cls_token.data();
  const auto pc = bb.pos_cls();
  std::vector<double> rows(n * d);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) rows[b * d + j] = cls[j] + pc.data()[j];
  return concat({patch_tokens, Tensor::from({n, 1, d}, std::move(rows))}, 1);
}

Tensor embed_tokens(const Tensor& e, const FrozenBackbone& bb) {
  const std::size_t n = e.dim(0), np = bb.cfg.num_patches(), d = bb.cfg.dim;
  if (e.rank() != 3 || e.dim(1) != np || e.dim(2) != d) {
    throw std::invalid_argument("embed_tokens: expected [n," + std::to_string(np) + "," +
                                std::to_string(d) + "], got " + shape_str(e.shape()));
  }
  auto pos_flat = reshape(bb.pos_patch_grid(), {np * d});
  auto t = reshape(add_bias(reshape(e, {n, np * d}), pos_flat), {n, np, d});
  return append_class_token(t, bb);
}

Tensor block_forward(const Tensor& tokens, const FrozenBlock& block, const ViTConfig& cfg,
                     const AdapterSet* adapters, std::size_t block_index, Tensor* attention_out) {
  if (tokens.rank() != 3 || tokens.dim(2) != cfg.dim) {
    throw std::invalid_argument("block_forward: token width mismatch, got " + shape_str(tokens.shape()));
  }
  if (adapters != nullptr) {
    for (Proj p : kAllProj) {
      const auto& ad = adapters->get(block_index, p);
      const auto& w = block.w(p);
      if (ad.a.dim(0) != w.dim(0) || ad.b.dim(0) != w.dim(1) || ad.a.dim(1) != ad.b.dim(1)) {
        throw std::invalid_argument(std::string("block_forward: adapter for ") + proj_name(p) +
                                    " has A " + shape_str(ad.a.shape()) + ", B " +
                                    shape_str(ad.b.shape()) + " against W " + shape_str(w.shape()));
      }
    }
  }
  const std::size_t n = tokens.dim(0), t = tokens.dim(1), d = cfg.dim, h = cfg.heads, dh = cfg.head_dim();
  auto w = [&](Proj p) { return effective_weight(block, adapters, block_index, p); };

  auto x = reshape(tokens, {n * t, d});
  auto hn = layer_norm(x, block.norm1_gain, block.norm1_bias, kNormEps);
  auto heads_of = [&](const Tensor& y) { return reshape(swap_axes12(reshape(y, {n, t, h, dh})), {n * h, t, dh}); };
  auto q = heads_of(linear(hn, w(Proj::query), block.b(Proj::query)));
  auto k = heads_of(linear(hn, w(Proj::key), block.b(Proj::key)));
  auto v = heads_of(linear(hn, w(Proj::value), block.b(Proj::value)));
  auto scores = scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  auto attn = softmax(scores, 2);
  if (attention_out != nullptr) *attention_out = attn;
  auto ctx = reshape(swap_axes12(reshape(bmm(attn, v), {n, h, t, dh})), {n * t, d});
  auto x1 = add(x, linear(ctx, w(Proj::out), block.b(Proj::out)));

  auto hn2 = layer_norm(x1, block.norm2_gain, block.norm2_bias, kNormEps);
  auto mlp = linear(gelu(linear(hn2, w(Proj::mlp_in), block.b(Proj::mlp_in))), w(Proj::mlp_out),
                    block.b(Proj::mlp_out));
  return reshape(add(x1, mlp), {n, t, d});
}

Tensor run_blocks(const Tensor& tokens, std::size_t first, std::size_t last, const FrozenBackbone& bb,
                  const AdapterSet* adapters) {
  const auto& cfg = bb.cfg;
  if (first < 1 || last > cfg.depth || first > last + 1) {
    throw std::invalid_argument("run_blocks: range [" + std::to_string(first) + ", " + std::to_string(last) +
                                "] outside 1.." + std::to_string(cfg.depth));
  }
  Tensor x = tokens;
  for (std::size_t l = first; l <= last; ++l) x = block_forward(x, bb.blocks[l - 1], cfg, adapters, l - 1);
  return x;
}

Tensor final_class_token(const Tensor& tokens, const FrozenBackbone& bb) {
  const auto& cfg = bb.cfg;
  const std::size_t n = tokens.dim(0), t = cfg.num_tokens();
  std::vector<std::size_t> cls_rows(n);
  for (std::size_t b = 0; b < n; ++b) cls_rows[b] = b * t + cfg.num_patches();
  auto cls = gather_rows(reshape(tokens, {n * t, cfg.dim}), cls_rows);
  return layer_norm(cls, bb.final_gain, bb.final_bias, kNormEps);
}

ForwardResult model_forward(const Tensor& tokens, const FrozenBackbone& bb, const AdapterSet* adapters,
                            const std::optional<LayerHook>& hook, bool capture_attention) {
  const auto& cfg = bb.cfg;
  if (hook && (hook->layer < 1 || hook->layer > cfg.depth - 1)) {
    throw std::invalid_argument("model_forward: hook layer " + std::to_string(hook->layer) +
                                " outside [1, " + std::to_string(cfg.depth - 1) + "]");
  }
  if (tokens.rank() != 3 || tokens.dim(1) != cfg.num_tokens()) {
    throw std::invalid_argument("model_forward: expected [n," + std::to_string(cfg.num_tokens()) + "," +
                                std::to_string(cfg.dim) + "], got " + shape_str(tokens.shape()));
  }
  ForwardResult result;
  Tensor x = tokens;
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    Tensor attn;
    x = block_forward(x, bb.blocks[l - 1], cfg, adapters, l - 1, capture_attention ? &attn : nullptr);
    if (capture_attention) result.attention.per_block.push_back(attn);
    if (hook && hook->layer == l) {
      x = hook->transform(x);
      if (x.rank() != 3 || x.dim(1) != cfg.num_tokens() || x.dim(2) != cfg.dim) {
        throw std::logic_error("model_forward: hook changed token set shape to " + shape_str(x.shape()));
      }
    }
  }
  result.cls = final_class_token(x, bb);
  return result;
}

}  // namespace udd
