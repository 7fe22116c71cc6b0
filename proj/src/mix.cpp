// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/mix.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "udd/shuffle.hpp"

namespace udd {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("mix: gamma must be in [0, 1), got " + std::to_string(gamma));
  }
}

}  // namespace

Stage parse_stage(const std::string& name) {
  if (name == "early") return Stage::early;
  if (name == "mid") return Stage::mid;
  if (name == "late") return Stage::late;
  throw std::invalid_argument("unknown stage '" + name + "' (expected early, mid or late)");
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::early: return "early";
    case Stage::mid: return "mid";
    case Stage::late: return "late";
  }
  return "?";
}

StagePartition StagePartition::of(std::size_t depth) {
  if (depth < 3) throw std::invalid_argument("StagePartition: depth must be at least 3, got " + std::to_string(depth));
  const std::size_t n = depth - 1;
  StagePartition p;
  std::size_t first = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t size = n / 3 + (i < n % 3 ? 1 : 0);
    p.ranges[i] = {first, first + size - 1};
    first += size;
  }
  return p;
}

std::size_t select_mix_layer(RngStream& rng, std::size_t depth, Stage stage) {
  const auto [lo, hi] = StagePartition::of(depth).range(stage);
  if (hi < lo) {
    throw std::invalid_argument(std::string("select_mix_layer: stage ") + stage_name(stage) + " is empty at depth " +
                                std::to_string(depth));
  }
  return lo + rng.below(hi - lo + 1);
}

std::vector<std::size_t> pair_samples(std::span<const int> labels, RngStream& rng) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> pairing(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) candidates.push_back(j);
    pairing[i] = candidates.empty() ? i : candidates[rng.below(candidates.size())];
  }
  return pairing;
}

std::size_t mix_count(double gamma, std::size_t num_patches) {
  check_gamma(gamma);
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(num_patches) + 1e-9));
}

std::vector<std::size_t> MixSpec::kept(std::size_t b) const {
  std::vector<bool> gone(num_patches, false);
  for (auto s : dropped.at(b)) gone[s] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_patches; ++i)
    if (!gone[i]) out.push_back(i);
  return out;
}

void MixSpec::validate(std::span<const int> labels) const {
  const std::size_t n = pairing.size(), k = mix_count(gamma, num_patches);
  if (labels.size() != n || dropped.size() != n || src.size() != n) {
    throw std::invalid_argument("MixSpec: batch size mismatch");
  }
  for (std::size_t b = 0; b < n; ++b) {
    if (pairing[b] >= n) throw std::invalid_argument("MixSpec: pairing index out of range");
    if (labels[pairing[b]] != labels[b]) {
      throw std::invalid_argument("MixSpec: sample " + std::to_string(b) + " paired across labels");
    }
    if (dropped[b].size() != k || src[b].size() != k) {
      throw std::invalid_argument("MixSpec: sample " + std::to_string(b) + " mixes " +
                                  std::to_string(src[b].size()) + " tokens, expected " + std::to_string(k));
    }
    for (const auto* idx : {&dropped[b], &src[b]}) {
      std::vector<bool> seen(num_patches, false);
      for (auto i : *idx) {
        if (i >= num_patches || seen[i]) throw std::invalid_argument("MixSpec: bad patch index");
        seen[i] = true;
      }
    }
  }
}

void to_json(nlohmann::json& j, const MixSpec& m) {
  j = {{"layer", m.layer},     {"gamma", m.gamma},     {"num_patches", m.num_patches},
       {"pairing", m.pairing}, {"dropped", m.dropped}, {"src", m.src}};
}

void from_json(const nlohmann::json& j, MixSpec& m) {
  m.layer = j.at("layer").get<std::size_t>();
  m.gamma = j.at("gamma").get<double>();
  m.num_patches = j.at("num_patches").get<std::size_t>();
  m.pairing = j.at("pairing").get<std::vector<std::size_t>>();
  m.dropped = j.at("dropped").get<std::vector<std::vector<std::size_t>>>();
  m.src = j.at("src").get<std::vector<std::vector<std::size_t>>>();
}

MixDraw sample_mix_draw(RngStream& rng, std::size_t num_patches, double gamma) {
  const std::size_t k = mix_count(gamma, num_patches);
  auto partial = [&](std::vector<std::size_t>& out) {
    std::vector<std::size_t> idx(num_patches);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(num_patches - i)]);
    out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  };
  MixDraw d;
  partial(d.dropped);
  std::ranges::sort(d.dropped);
  partial(d.src);
  return d;
}

MixSpec sample_mix_spec(RngStream& rng, std::span<const int> labels, std::size_t depth, std::size_t num_patches,
                        double gamma, Stage stage) {
  note_augmentation_draw();
  check_gamma(gamma);
  if (labels.empty()) throw std::invalid_argument("sample_mix_spec: empty batch");
  MixSpec m;
  m.layer = select_mix_layer(rng, depth, stage);
  m.gamma = gamma;
  m.num_patches = num_patches;
  m.pairing = pair_samples(labels, rng);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    auto d = sample_mix_draw(rng, num_patches, gamma);
    m.dropped.push_back(std::move(d.dropped));
    m.src.push_back(std::move(d.src));
  }
  m.validate(labels);
  return m;
}

Tensor mix_batch(const Tensor& tokens, const MixSpec& spec) {
  if (tokens.rank() != 3 || tokens.dim(0) != spec.batch() || tokens.dim(1) != spec.num_patches + 1) {
    throw std::invalid_argument("mix_batch: tokens " + shape_str(tokens.shape()) + " do not match a batch of " +
                                std::to_string(spec.batch()) + " sets of " + std::to_string(spec.num_patches + 1));
  }
  const std::size_t n = tokens.dim(0), t = tokens.dim(1), d = tokens.dim(2);
  std::vector<std::size_t> rows(n * t);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < t; ++i) rows[b * t + i] = b * t + i;
    for (std::size_t j = 0; j < spec.dropped[b].size(); ++j)
      rows[b * t + spec.dropped[b][j]] = spec.pairing[b] * t + spec.src[b][j];
  }
  return reshape(gather_rows(reshape(tokens, {n * t, d}), rows), {n, t, d});
}

Tensor mix_tokens(const Tensor& tgt, const Tensor& src, double gamma, RngStream& rng) {
  if (tgt.rank() != 2 || src.shape() != tgt.shape() || tgt.dim(0) < 2) {
    throw std::invalid_argument("mix_tokens: token sets " + shape_str(tgt.shape()) + " and " +
                                shape_str(src.shape()) + " must match as [N+1, D]");
  }
  const std::size_t t = tgt.dim(0), d = tgt.dim(1);
  auto draw = sample_mix_draw(rng, t - 1, gamma);
  MixSpec spec;
  spec.gamma = gamma;
  spec.num_patches = t - 1;
  spec.pairing = {1, 0};
  spec.dropped = {draw.dropped, {}};
  spec.src = {draw.src, {}};
  auto both = reshape(concat({tgt, src}, 0), {2, t, d});
  auto mixed = reshape(mix_batch(both, spec), {2 * t, d});
  std::vector<std::size_t> first(t);
  std::iota(first.begin(), first.end(), 0);
  return gather_rows(mixed, first);
}

}  // namespace udd
