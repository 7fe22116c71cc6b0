// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "udd/digest.hpp"

namespace udd {

using nlohmann::json;

namespace {

// Stream ids under the run seed. Data order and augmentation never share a
// stream, so replaying augmentation cannot perturb batch composition.
constexpr std::uint64_t kOrderStream = 0x0DE5;
constexpr std::uint64_t kShuffleStream = 0x5AFF;
constexpr std::uint64_t kMixStream = 0x313C;
constexpr std::uint64_t kModelStream = 0x30DE;

constexpr const char* kCheckpointFormat = "udd-checkpoint";
constexpr int kCheckpointVersion = 1;

void fail(const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); }

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

std::string encode_values(std::span<const double> v) {
  std::string s;
  s.reserve(v.size() * 16);
  for (double x : v) s += to_hex(std::bit_cast<std::uint64_t>(x));
  return s;
}

std::vector<double> decode_values(const std::string& s, std::size_t expected, const std::string& what) {
  if (s.size() != expected * 16) {
    throw CheckpointError("checkpoint: " + what + " holds " + std::to_string(s.size() / 16) + " values, expected " +
                          std::to_string(expected));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const char c = s[i * 16 + k];
      std::uint64_t d = 0;
      if (c >= '0' && c <= '9') {
        d = static_cast<std::uint64_t>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        d = static_cast<std::uint64_t>(c - 'a' + 10);
      } else {
        throw CheckpointError("checkpoint: bad hex digit in " + what);
      }
      bits = (bits << 4) | d;
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::string json_digest(const json& body) {
  Fnv1a h;
  h.update(body.dump());
  return h.hex();
}

void zero_grads(const std::vector<NamedParam>& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void apply_adamw(const std::vector<NamedParam>& params, OptimizerState& opt, const TrainConfig& cfg, double lr) {
  if (opt.moments.size() != params.size()) throw std::invalid_argument("optimizer state does not match parameters");
  const AdamWHyper h{lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  ++opt.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const auto g = t.grad();
    adamw_update(t.mutable_data(), g, opt.moments[i], opt.step, h);
    check_finite(t.data(), "parameter " + params[i].name);
  }
}

StepStats stats_of(const LossComponents& c, double lr, std::uint64_t step) {
  StepStats s;
  s.step = step;
  s.lr = lr;
  s.ce = c.ce.item();
  s.con = c.con.defined() ? c.con.item() : 0.0;
  s.align = c.align.defined() ? c.align.item() : 0.0;
  s.total = c.total.item();
  return s;
}

template <typename F>
StepStats guarded_step(std::uint64_t step, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    throw NumericError("training step " + std::to_string(step) + ": " + e.what());
  }
}

}  // namespace

ShuffleParams TrainConfig::shuffle_params() const {
  return ShuffleParams{shuffle_blocks, min_area_frac, ratio_range, area_frac};
}

LossWeights TrainConfig::loss_weights() const { return LossWeights{tau, lambda_con, lambda_align}; }

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (epochs == 0) fail("epochs must be at least 1");
  if (warmup_epochs >= epochs && warmup_epochs != 0) fail("warmup_epochs must be smaller than epochs");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (shuffle_blocks == 0 || model.grid_side() % shuffle_blocks != 0) {
    fail("shuffle_blocks must divide the patch grid side " + std::to_string(model.grid_side()));
  }
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(lambda_con >= 0.0) || !(lambda_align >= 0.0)) fail("loss weights must be non-negative");
  if (!(min_area_frac > 0.0 && min_area_frac <= 1.0)) fail("min_area_frac must lie in (0, 1]");
  if (!(ratio_range.first > 0.0 && ratio_range.first <= ratio_range.second)) fail("bad ratio_range");
  if (!(area_frac.first > 0.0 && area_frac.first <= area_frac.second && area_frac.second <= 1.0)) {
    fail("bad area_frac");
  }
}

void to_json(json& j, const ViTConfig& c) {
  j = {{"image_side", c.image_side}, {"patch_side", c.patch_side}, {"channels", c.channels},
       {"dim", c.dim},               {"depth", c.depth},           {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio},   {"lora_rank", c.lora_rank}};
}

void from_json(const json& j, ViTConfig& c) {
  static const std::vector<std::string> known{"image_side", "patch_side", "channels",  "dim",
                                              "depth",      "heads",      "mlp_ratio", "lora_rank"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("model config: unknown field '" + key + "'");
    }
  }
  read_if(j, "image_side", c.image_side);
  read_if(j, "patch_side", c.patch_side);
  read_if(j, "channels", c.channels);
  read_if(j, "dim", c.dim);
  read_if(j, "depth", c.depth);
  read_if(j, "heads", c.heads);
  read_if(j, "mlp_ratio", c.mlp_ratio);
  read_if(j, "lora_rank", c.lora_rank);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"warmup_epochs", c.warmup_epochs},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"weight_decay", c.weight_decay},
       {"gamma", c.gamma},
       {"shuffle_blocks", c.shuffle_blocks},
       {"tau", c.tau},
       {"lambda_con", c.lambda_con},
       {"lambda_align", c.lambda_align},
       {"min_area_frac", c.min_area_frac},
       {"ratio_range", {c.ratio_range.first, c.ratio_range.second}},
       {"area_frac", {c.area_frac.first, c.area_frac.second}},
       {"mix_stage", stage_name(c.mix_stage)},
       {"seed", c.seed},
       {"branches", c.branches},
       {"model", c.model},
       {"backbone_seed", c.backbone_seed}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::vector<std::string> known{
      "lr",  "batch_size", "epochs",     "warmup_epochs", "beta1",         "beta2",       "eps",
      "weight_decay", "gamma", "shuffle_blocks", "tau", "lambda_con", "lambda_align", "min_area_frac",
      "ratio_range", "area_frac", "mix_stage", "seed", "branches", "model", "backbone_seed"};
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("train config: unknown field '" + key + "'");
    }
  }
  read_if(j, "lr", c.lr);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "epochs", c.epochs);
  read_if(j, "warmup_epochs", c.warmup_epochs);
  read_if(j, "beta1", c.beta1);
  read_if(j, "beta2", c.beta2);
  read_if(j, "eps", c.eps);
  read_if(j, "weight_decay", c.weight_decay);
  read_if(j, "gamma", c.gamma);
  read_if(j, "shuffle_blocks", c.shuffle_blocks);
  read_if(j, "tau", c.tau);
  read_if(j, "lambda_con", c.lambda_con);
  read_if(j, "lambda_align", c.lambda_align);
  read_if(j, "min_area_frac", c.min_area_frac);
  read_if(j, "ratio_range", c.ratio_range);
  read_if(j, "area_frac", c.area_frac);
  if (auto it = j.find("mix_stage"); it != j.end()) c.mix_stage = parse_stage(it->get<std::string>());
  read_if(j, "seed", c.seed);
  read_if(j, "branches", c.branches);
  if (auto it = j.find("model"); it != j.end()) from_json(*it, c.model);
  read_if(j, "backbone_seed", c.backbone_seed);
}

std::vector<std::string> config_mismatches(const ViTConfig& a, const ViTConfig& b) {
  std::vector<std::string> out;
  auto cmp = [&](const char* name, std::size_t x, std::size_t y) {
    if (x != y) out.push_back(std::string(name) + " (" + std::to_string(x) + " vs " + std::to_string(y) + ")");
  };
  cmp("image_side", a.image_side, b.image_side);
  cmp("patch_side", a.patch_side, b.patch_side);
  cmp("channels", a.channels, b.channels);
  cmp("dim", a.dim, b.dim);
  cmp("depth", a.depth, b.depth);
  cmp("heads", a.heads, b.heads);
  cmp("mlp_ratio", a.mlp_ratio, b.mlp_ratio);
  cmp("lora_rank", a.lora_rank, b.lora_rank);
  return out;
}

Model Model::init(const ViTConfig& cfg, std::uint64_t backbone_seed, std::uint64_t seed) {
  Model m;
  m.backbone = init_frozen_backbone(cfg, backbone_seed);
  const RngStream root(seed, kModelStream);
  m.adapters = AdapterSet::init(cfg, root.split(1));
  m.projector = Projector::init(cfg.dim, cfg.dim, root.split(2));
  m.head = ClassifierHead::init(cfg.dim, root.split(3));
  return m;
}

std::vector<NamedParam> trainable_params(const Model& m) {
  std::vector<NamedParam> out;
  for (const auto& ad : m.adapters.all()) {
    const std::string base = "adapter." + std::to_string(ad.block) + "." + proj_name(ad.target);
    out.push_back({base + ".a", ad.a});
    out.push_back({base + ".b", ad.b});
  }
  for (std::size_t i = 0; i < m.projector.layers.size(); ++i) {
    out.push_back({"projector." + std::to_string(i) + ".weight", m.projector.layers[i].weight});
    out.push_back({"projector." + std::to_string(i) + ".bias", m.projector.layers[i].bias});
  }
  out.push_back({"head.weight", m.head.fc.weight});
  out.push_back({"head.bias", m.head.fc.bias});
  return out;
}

std::string trainable_digest(const Model& m) {
  Fnv1a h;
  for (const auto& p : trainable_params(m)) {
    h.update(p.name);
    h.update(p.tensor.data());
  }
  return h.hex();
}

Prediction predict(const Model& m, const Tensor& images, bool capture_attention, AttentionCapture* attention) {
  NoGradScope no_grad;
  const auto e = patch_embed(images, m.backbone);
  auto fwd = model_forward(embed_tokens(e, m.backbone), m.backbone, &m.adapters, std::nullopt, capture_attention);
  if (attention != nullptr) *attention = std::move(fwd.attention);
  return {fwd.cls, m.head.forward(fwd.cls)};
}

OptimizerState OptimizerState::for_params(const std::vector<NamedParam>& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.moments.push_back({std::vector<double>(p.tensor.numel(), 0.0), std::vector<double>(p.tensor.numel(), 0.0)});
  }
  return s;
}

void adamw_update(std::span<double> param, std::span<const double> grad, AdamMoments& st, std::uint64_t t,
                  const AdamWHyper& h) {
  if (grad.size() != param.size() || st.m.size() != param.size() || st.v.size() != param.size()) {
    throw std::invalid_argument("adamw_update: parameter has " + std::to_string(param.size()) + " values, gradient " +
                                std::to_string(grad.size()) + ", moments " + std::to_string(st.m.size()));
  }
  if (t == 0) throw std::invalid_argument("adamw_update: step is 1-based");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    st.m[i] = h.beta1 * st.m[i] + (1.0 - h.beta1) * grad[i];
    st.v[i] = h.beta2 * st.v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const double m_hat = st.m[i] / c1;
    const double v_hat = st.v[i] / c2;
    param[i] -= h.lr * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * param[i]);
  }
}

double lr_at(std::uint64_t step, std::uint64_t total_steps, std::uint64_t warmup_steps, double lr) {
  if (total_steps == 0 || warmup_steps > total_steps) {
    throw std::invalid_argument("lr_at: need 0 <= warmup_steps <= total_steps and total_steps > 0");
  }
  if (step < warmup_steps) return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void to_json(json& j, const StepStats& s) {
  j = {{"step", s.step}, {"lr", s.lr}, {"L_ce", s.ce}, {"L_con", s.con}, {"L_align", s.align}, {"L_total", s.total}};
}

StepAugment sample_step_augment(const TrainConfig& cfg, std::span<const int> labels,
                                std::span<const RngStream> sample_streams, RngStream step_stream) {
  if (sample_streams.size() != labels.size()) throw std::invalid_argument("one augmentation stream per sample");
  StepAugment aug;
  const auto params = cfg.shuffle_params();
  for (auto r : sample_streams) aug.shuffles.push_back(sample_shuffle_spec(r, cfg.model.grid_side(), params));
  aug.mix = sample_mix_spec(step_stream, labels, cfg.model.depth, cfg.model.num_patches(), cfg.gamma, cfg.mix_stage);
  return aug;
}

StepStats three_branch_step(const Tensor& images, std::span<const int> labels, Model& model, OptimizerState& opt,
                            const TrainConfig& cfg, const StepAugment& aug, double lr) {
  if (!cfg.branches) return plain_ce_step(images, labels, model, opt, cfg, lr);
  if (labels.empty()) throw std::invalid_argument("three_branch_step: empty batch");
  if (aug.shuffles.size() != labels.size()) throw std::invalid_argument("three_branch_step: one shuffle per sample");
  aug.mix.validate(labels);
  if (aug.mix.layer < 1 || aug.mix.layer + 1 > cfg.model.depth) {
    throw std::invalid_argument("three_branch_step: mix layer " + std::to_string(aug.mix.layer) + " outside [1, " +
                                std::to_string(cfg.model.depth - 1) + "]");
  }
  const auto params = trainable_params(model);
  return guarded_step(opt.step + 1, [&] {
    zero_grads(params);
    Tape tape;
    LossComponents loss;
    {
      TapeScope scope(tape);
      const auto& bb = model.backbone;
      const auto e = patch_embed(images, bb);
      const auto tokens = embed_tokens(e, bb);
      // The original and mixed branches agree up to the mix layer, so that
      // prefix is computed once.
      const std::size_t depth = bb.cfg.depth, l = aug.mix.layer;
      const auto prefix = run_blocks(tokens, 1, l, bb, &model.adapters);
      BranchOutputs out;
      out.cls = final_class_token(run_blocks(prefix, l + 1, depth, bb, &model.adapters), bb);
      out.cls_s = model_forward(apply_shuffle(e, bb, aug.shuffles), bb, &model.adapters).cls;
      out.cls_m = final_class_token(run_blocks(mix_batch(prefix, aug.mix), l + 1, depth, bb, &model.adapters), bb);
      loss = compute_objectives(out, labels, model.projector, model.head, cfg.loss_weights());
    }
    tape.backward(loss.total);
    apply_adamw(params, opt, cfg, lr);
    return stats_of(loss, lr, opt.step);
  });
}

StepStats plain_ce_step(const Tensor& images, std::span<const int> labels, Model& model, OptimizerState& opt,
                        const TrainConfig& cfg, double lr) {
  if (labels.empty()) throw std::invalid_argument("plain_ce_step: empty batch");
  const auto params = trainable_params(model);
  return guarded_step(opt.step + 1, [&] {
    zero_grads(params);
    Tape tape;
    LossComponents loss;
    {
      TapeScope scope(tape);
      const auto& bb = model.backbone;
      const auto cls = model_forward(embed_tokens(patch_embed(images, bb), bb), bb, &model.adapters).cls;
      loss.ce = cross_entropy(model.head.forward(cls), labels);
      loss.total = loss.ce;
    }
    tape.backward(loss.total);
    apply_adamw(params, opt, cfg, lr);
    return stats_of(loss, lr, opt.step);
  });
}

std::uint64_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  return (n + batch_size - 1) / batch_size;
}

TrainRun train(const Dataset& data, const TrainConfig& cfg, std::ostream* log_jsonl,
               const std::function<void(std::size_t, const StepStats&)>& progress) {
  cfg.validate();
  if (data.size() < 2) throw std::invalid_argument("train: dataset needs at least 2 samples");
  if (data.image.side != cfg.model.image_side || data.image.channels != cfg.model.channels) {
    throw std::invalid_argument("train: dataset images are " + std::to_string(data.image.side) + "px x " +
                                std::to_string(data.image.channels) + "ch but the model expects " +
                                std::to_string(cfg.model.image_side) + "px x " + std::to_string(cfg.model.channels) +
                                "ch");
  }
  TrainRun run{Model::init(cfg.model, cfg.backbone_seed, cfg.seed), {}, {}};
  const auto params = trainable_params(run.model);
  run.opt = OptimizerState::for_params(params);

  const std::uint64_t spe = steps_per_epoch(data.size(), cfg.batch_size);
  const std::uint64_t total = spe * cfg.epochs, warmup = spe * cfg.warmup_epochs;
  const RngStream order_root(cfg.seed, kOrderStream), shuffle_root(cfg.seed, kShuffleStream),
      mix_root(cfg.seed, kMixStream);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto r = order_root.split(epoch);
    r.shuffle(order.begin(), order.end());
    StepStats last;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      const auto images = data.batch_images(rows);
      const auto labels = data.batch_labels(rows);
      const std::uint64_t step = run.opt.step + 1;
      const double lr = lr_at(step, total, warmup, cfg.lr);
      if (cfg.branches) {
        std::vector<RngStream> streams;
        for (auto row : rows) streams.push_back(shuffle_root.split({epoch, row}));
        const auto aug = sample_step_augment(cfg, labels, streams, mix_root.split(step));
        last = three_branch_step(images, labels, run.model, run.opt, cfg, aug, lr);
      } else {
        last = plain_ce_step(images, labels, run.model, run.opt, cfg, lr);
      }
      run.log.push_back(last);
      if (log_jsonl != nullptr) *log_jsonl << json(last).dump() << '\n';
    }
    if (progress) progress(epoch, last);
  }
  return run;
}

std::string save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState& opt,
                            const TrainConfig& cfg, const std::string& data_digest) {
  const auto params = trainable_params(model);
  if (opt.moments.size() != params.size()) throw std::invalid_argument("save_checkpoint: optimizer state mismatch");
  json tensors = json::array();
  json moments = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params[i].name},
                       {"shape", params[i].tensor.shape()},
                       {"values", encode_values(params[i].tensor.data())}});
    moments.push_back({{"m", encode_values(opt.moments[i].m)}, {"v", encode_values(opt.moments[i].v)}});
  }
  json body = {{"format", kCheckpointFormat},
               {"version", kCheckpointVersion},
               {"config", cfg},
               {"backbone", {{"seed", model.backbone.seed}, {"digest", model.backbone.digest()}}},
               {"data_digest", data_digest},
               {"params", tensors},
               {"optimizer", {{"step", opt.step}, {"moments", moments}}}};
  const std::string digest = json_digest(body);
  body["digest"] = digest;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << body.dump(1) << '\n';
  if (!out) throw std::runtime_error("short write to " + path.string());
  return digest;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ViTConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing checkpoint " + path.string());
  json body;
  try {
    body = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": not a checkpoint: " + e.what());
  }
  try {
    if (body.value("format", "") != kCheckpointFormat) throw CheckpointError(path.string() + ": unknown format");
    const int version = body.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(path.string() + ": checkpoint version " + std::to_string(version) + ", this build reads " +
                            std::to_string(kCheckpointVersion));
    }
    const std::string stored = body.at("digest").get<std::string>();
    body.erase("digest");
    const std::string actual = json_digest(body);
    if (stored != actual) {
      throw CheckpointError(path.string() + ": digest mismatch (stored " + stored + ", computed " + actual + ")");
    }

    Checkpoint ck;
    ck.digest = stored;
    ck.config = body.at("config").get<TrainConfig>();
    ck.data_digest = body.at("data_digest").get<std::string>();
    if (expected != nullptr) {
      const auto diff = config_mismatches(ck.config.model, *expected);
      if (!diff.empty()) {
        std::string msg = path.string() + ": model config mismatch in";
        for (const auto& d : diff) msg += " " + d;
        throw CheckpointError(msg);
      }
    }
    const auto backbone_seed = body.at("backbone").at("seed").get<std::uint64_t>();
    ck.model = Model::init(ck.config.model, backbone_seed, ck.config.seed);
    if (ck.model.backbone.digest() != body.at("backbone").at("digest").get<std::string>()) {
      throw CheckpointError(path.string() + ": re-derived backbone digest differs from the stored one");
    }
    const auto params = trainable_params(ck.model);
    const auto& tensors = body.at("params");
    const auto& moments = body.at("optimizer").at("moments");
    if (tensors.size() != params.size() || moments.size() != params.size()) {
      throw CheckpointError(path.string() + ": expected " + std::to_string(params.size()) + " parameter tensors, found " +
                            std::to_string(tensors.size()));
    }
    ck.opt.step = body.at("optimizer").at("step").get<std::uint64_t>();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      const auto name = t.at("name").get<std::string>();
      if (name != params[i].name || t.at("shape").get<Shape>() != params[i].tensor.shape()) {
        throw CheckpointError(path.string() + ": parameter " + std::to_string(i) + " is " + name + " " +
                              shape_str(t.at("shape").get<Shape>()) + ", expected " + params[i].name + " " +
                              shape_str(params[i].tensor.shape()));
      }
      const std::size_t n = params[i].tensor.numel();
      const auto values = decode_values(t.at("values").get<std::string>(), n, name);
      Tensor dst = params[i].tensor;
      std::copy(values.begin(), values.end(), dst.mutable_data().begin());
      ck.opt.moments.push_back({decode_values(moments[i].at("m").get<std::string>(), n, name + " m"),
                                decode_values(moments[i].at("v").get<std::string>(), n, name + " v")});
    }
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace udd
