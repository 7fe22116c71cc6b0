// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "udd/mix.hpp"
#include "udd/objectives.hpp"
#include "udd/shuffle.hpp"
#include "udd/synth.hpp"
#include "udd/vit.hpp"

namespace udd {

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::size_t warmup_epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-3;
  double weight_decay = 1e-2;
  double gamma = 0.3;
  std::size_t shuffle_blocks = 2;  // s
  double tau = 0.1;
  double lambda_con = 0.1;
  double lambda_align = 0.1;
  double min_area_frac = 0.3;
  std::pair<double, double> ratio_range{0.75, 4.0 / 3.0};
  std::pair<double, double> area_frac{60.0 / 196.0, 1.0};
  Stage mix_stage = Stage::mid;
  std::uint64_t seed = 0;
  /// false trains the original branch with cross-entropy only (the baseline).
  bool branches = true;
  ViTConfig model;
  std::uint64_t backbone_seed = 0;

  ShuffleParams shuffle_params() const;
  LossWeights loss_weights() const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are an error.
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);

/// Names of the fields that differ between two model configs.
std::vector<std::string> config_mismatches(const ViTConfig& a, const ViTConfig& b);

struct Model {
  FrozenBackbone backbone;
  AdapterSet adapters;
  Projector projector;
  ClassifierHead head;

  /// Backbone from `backbone_seed`; adapters, projector and head from `seed`.
  static Model init(const ViTConfig& cfg, std::uint64_t backbone_seed, std::uint64_t seed);
  const ViTConfig& cfg() const { return backbone.cfg; }
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Every adapter A and B, then projector and head weights, in a fixed order.
std::vector<NamedParam> trainable_params(const Model& m);
/// FNV-1a over the trainable tensors' names and values.
std::string trainable_digest(const Model& m);

/// Original-branch class tokens [n, D] and logits [n, 2] for images [n, C, H, W].
struct Prediction {
  Tensor cls, logits;
};
Prediction predict(const Model& m, const Tensor& images, bool capture_attention = false,
                   AttentionCapture* attention = nullptr);

struct AdamMoments {
  std::vector<double> m, v;
};

struct OptimizerState {
  std::vector<AdamMoments> moments;  // parallel to trainable_params
  std::uint64_t step = 0;            // number of updates applied

  static OptimizerState for_params(const std::vector<NamedParam>& params);
};

struct AdamWHyper {
  double lr = 5e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-3, weight_decay = 1e-2;
};

/// One bias-corrected AdamW update at 1-based step t with decoupled decay:
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
void adamw_update(std::span<double> param, std::span<const double> grad, AdamMoments& state, std::uint64_t t,
                  const AdamWHyper& h);

/// Linear ramp 0 -> lr over warmup_steps, then cosine to 0 at total_steps.
double lr_at(std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps, double lr);

struct StepStats {
  std::uint64_t step = 0;
  double lr = 0.0;
  double ce = 0.0, con = 0.0, align = 0.0, total = 0.0;
};

void to_json(nlohmann::json& j, const StepStats& s);

/// Augmentation drawn for one step; recorded so a step can be replayed.
struct StepAugment {
  std::vector<ShuffleSpec> shuffles;
  MixSpec mix;
};

StepAugment sample_step_augment(const TrainConfig& cfg, std::span<const int> labels,
                                std::span<const RngStream> sample_streams, RngStream step_stream);

/// Forward of all branches, loss, backward and one AdamW update of the
/// trainable parameters. With cfg.branches false only cross-entropy on the
/// original branch is used and `aug` is ignored. Non-finite values abort
/// with a NumericError naming the step.
StepStats three_branch_step(const Tensor& images, std::span<const int> labels, Model& model,
                            OptimizerState& opt, const TrainConfig& cfg, const StepAugment& aug, double lr);

/// Cross-entropy-only update on the original branch.
StepStats plain_ce_step(const Tensor& images, std::span<const int> labels, Model& model, OptimizerState& opt,
                        const TrainConfig& cfg, double lr);

struct TrainRun {
  Model model;
  OptimizerState opt;
  std::vector<StepStats> log;
};

std::uint64_t steps_per_epoch(std::size_t n, std::size_t batch_size);

/// Full training loop. Each step's stats are appended to `log_jsonl` as one
/// JSON line when given; `progress` is called after every epoch.
TrainRun train(const Dataset& data, const TrainConfig& cfg, std::ostream* log_jsonl = nullptr,
               const std::function<void(std::size_t epoch, const StepStats&)>& progress = {});

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  TrainConfig config;
  Model model;
  OptimizerState opt;
  std::string data_digest;
  std::string digest;
};

/// Writes a JSON checkpoint and returns its digest. Tensor values are stored
/// as exact 64-bit hex patterns.
std::string save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState& opt,
                            const TrainConfig& cfg, const std::string& data_digest = "");

/// Verifies version, content digest and the re-derived backbone digest. With
/// `expected` set, a differing model config throws naming every field.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ViTConfig* expected = nullptr);

}  // namespace udd
