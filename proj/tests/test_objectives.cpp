// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "udd/gradcheck.hpp"
#include "udd/mix.hpp"
#include "udd/objectives.hpp"
#include "udd/shuffle.hpp"
#include "udd/vit.hpp"

namespace udd {
namespace {

Tensor randn(Shape shape, RngStream& rng, bool grad = false) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Tensor& t) {
  Rows r(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) r[i][j] = t.at({i, j});
  return r;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

// Literal pairwise evaluation: anchor z_i, positive v_i, negatives z_j and v_j
// for every j != i.
double brute_term(const Rows& z, const Rows& v, double tau) {
  double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double pos = std::exp(cosine(z[i], v[i]) / tau);
    double neg = 0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j == i) continue;
      neg += std::exp(cosine(z[i], z[j]) / tau) + std::exp(cosine(z[i], v[j]) / tau);
    }
    total += -std::log(pos / (pos + neg));
  }
  return total / static_cast<double>(z.size());
}

TEST(NtXent, NoNegativesIsZero) {
  RngStream rng(1);
  auto a = randn({4}, rng), p = randn({4}, rng);
  EXPECT_EQ(nt_xent(a, p, {}, 0.1).item(), 0.0);
}

TEST(NtXent, OrthogonalNegative) {
  auto a = Tensor::from({2}, {1, 0});
  EXPECT_NEAR(nt_xent(a, a, {Tensor::from({2}, {0, 3})}, 0.1).item(), 4.539889921686465e-05, 1e-15);
}

TEST(NtXent, ScaleInvariant) {
  RngStream rng(2);
  auto a = randn({5}, rng), p = randn({5}, rng);
  std::vector<Tensor> n{randn({5}, rng), randn({5}, rng), randn({5}, rng)}, scaled;
  for (const auto& v : n) scaled.push_back(scale(v, 3.0));
  const double base = nt_xent(a, p, n, 0.1).item();
  EXPECT_NEAR(nt_xent(scale(a, 7.5), scale(p, 0.01), scaled, 0.1).item(), base, 1e-9);
}

TEST(NtXent, Errors) {
  auto a = Tensor::from({2}, {1, 0});
  const auto b = Tensor::from({2}, {0, 1});
  EXPECT_THROW(nt_xent(a, a, {Tensor::zeros({2})}, 0.1), std::invalid_argument);
  EXPECT_THROW(nt_xent(a, a, {b}, 0.0), std::invalid_argument);
  EXPECT_THROW(nt_xent(Tensor::zeros({2}), a, {b}, 0.1), std::invalid_argument);
  EXPECT_THROW(nt_xent(a, a, {Tensor::zeros({3})}, 0.1), std::invalid_argument);
}

TEST(Contrastive, BatchOfOneIsZero) {
  RngStream rng(3);
  auto z = randn({1, 6}, rng), s = randn({1, 6}, rng), m = randn({1, 6}, rng);
  EXPECT_EQ(contrastive_total(z, s, m, 0.1).item(), 0.0);
}

TEST(Contrastive, IdenticalBatchOfTwo) {
  auto z = Tensor::from({2, 3}, {1, 2, 3, 1, 2, 3});
  EXPECT_NEAR(contrastive_term(z, z, 0.1).item(), std::log(3.0), 1e-12);
  EXPECT_NEAR(contrastive_total(z, z, z, 0.1).item(), 2 * std::log(3.0), 1e-12);
}

TEST(Contrastive, MatchesBruteForce) {
  RngStream rng(4);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      auto z = randn({n, 6}, rng), s = randn({n, 6}, rng), m = randn({n, 6}, rng);
      const double tau = trial == 0 ? 0.1 : rng.uniform(0.05, 1.0);
      const double want = brute_term(rows_of(z), rows_of(s), tau) + brute_term(rows_of(z), rows_of(m), tau);
      EXPECT_NEAR(contrastive_total(z, s, m, tau).item(), want, 1e-10) << "n=" << n;
    }
  }
}

TEST(Contrastive, SingleAnchorAgreesWithBatchedTerm) {
  RngStream rng(5);
  auto z = randn({4, 5}, rng), v = randn({4, 5}, rng);
  double sum_loss = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) others.push_back(j);
    auto row = [](const Tensor& t, std::size_t r) {
      const std::size_t idx[] = {r};
      return reshape(gather_rows(t, idx), {5});
    };
    std::vector<Tensor> negs;
    for (auto j : others) negs.push_back(row(z, j));
    for (auto j : others) negs.push_back(row(v, j));
    sum_loss += nt_xent(row(z, i), row(v, i), negs, 0.1).item();
  }
  EXPECT_NEAR(contrastive_term(z, v, 0.1).item(), sum_loss / 4, 1e-12);
}

TEST(JsDivergence, Values) {
  auto p = Tensor::from({2}, {0.3, 0.7});
  EXPECT_EQ(js_divergence(p, p).item(), 0.0);
  EXPECT_NEAR(js_divergence(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(js_divergence(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0.5, 0.5})).item(),
              0.21576155433883565, 1e-15);
  EXPECT_THROW(js_divergence(Tensor::from({2}, {0.6, 0.6}), p), std::invalid_argument);
  EXPECT_THROW(js_divergence(Tensor::from({2}, {1.2, -0.2}), p), std::invalid_argument);
}

TEST(JsDivergence, SymmetricAndBounded) {
  RngStream rng(6);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    auto p = Tensor::from({2}, {a, 1 - a}), q = Tensor::from({2}, {b, 1 - b});
    const double pq = js_divergence(p, q).item(), qp = js_divergence(q, p).item();
    EXPECT_NEAR(pq, qp, 1e-12);
    EXPECT_GE(pq, 0.0);
    EXPECT_LE(pq, std::log(2.0) + 1e-15);
  }
}

double hand_js(double p0, double q0) {
  auto term = [](double a, double m) { return a == 0 ? 0.0 : a * std::log(a / m); };
  const double p1 = 1 - p0, q1 = 1 - q0, m0 = (p0 + q0) / 2, m1 = (p1 + q1) / 2;
  return 0.5 * (term(p0, m0) + term(p1, m1)) + 0.5 * (term(q0, m0) + term(q1, m1));
}

double softmax0(double a, double b) { return 1.0 / (1.0 + std::exp(b - a)); }

TEST(AlignLoss, MatchesHandEvaluation) {
  RngStream rng(7);
  auto l = randn({5, 2}, rng), ls = randn({5, 2}, rng), lm = randn({5, 2}, rng);
  double want = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double p = softmax0(l.at({i, 0}), l.at({i, 1}));
    want += hand_js(p, softmax0(ls.at({i, 0}), ls.at({i, 1}))) + hand_js(p, softmax0(lm.at({i, 0}), lm.at({i, 1})));
  }
  EXPECT_NEAR(align_loss(l, ls, lm).item(), want / 5, 1e-12);
  EXPECT_EQ(align_loss(l, l, l).item(), 0.0);
  auto far = Tensor::from({1, 2}, {40, -40}), other = Tensor::from({1, 2}, {-40, 40});
  EXPECT_LE(align_loss(far, other, other).item(), 2 * std::log(2.0));
}

TEST(CrossEntropy, Values) {
  const std::vector<int> zero{0}, one{1}, bad{2};
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 2}, {0, 0}), zero).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 2}, {10, -10}), zero).item(), 2.061153620314381e-09, 1e-22);
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 2}, {10, -10}), one).item(), 20.000000002061153, 1e-12);
  EXPECT_THROW(cross_entropy(Tensor::from({1, 2}, {0, 0}), bad), std::invalid_argument);
}

TEST(TotalLoss, Weighting) {
  LossWeights w;
  EXPECT_EQ(w.lambda_con, 0.1);
  EXPECT_EQ(w.lambda_align, 0.1);
  EXPECT_EQ(w.tau, 0.1);
  EXPECT_NEAR(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), Tensor::scalar(0.2), w).item(), 1.07, 1e-15);
  w.lambda_con = w.lambda_align = 0;
  EXPECT_EQ(total_loss(Tensor::scalar(1.25), Tensor::scalar(0.5), Tensor::scalar(0.2), w).item(), 1.25);
}

TEST(Objectives, CrossEntropyReadsOriginalBranchOnly) {
  RngStream rng(8);
  auto g = Projector::init(6, 6, rng.split(1));
  auto head = ClassifierHead::init(6, rng.split(2));
  auto cls = randn({3, 6}, rng);
  const std::vector<int> labels{0, 1, 1};
  BranchOutputs a{cls, randn({3, 6}, rng), randn({3, 6}, rng)};
  BranchOutputs b{cls, randn({3, 6}, rng), randn({3, 6}, rng)};
  LossWeights w;
  auto la = compute_objectives(a, labels, g, head, w), lb = compute_objectives(b, labels, g, head, w);
  EXPECT_EQ(la.ce.item(), lb.ce.item());
  EXPECT_NE(la.con.item(), lb.con.item());
  EXPECT_EQ(la.ce.item(), cross_entropy(head.forward(cls), labels).item());
  EXPECT_NEAR(la.total.item(), la.ce.item() + 0.1 * la.con.item() + 0.1 * la.align.item(), 1e-12);
}

// Tiny model through all three branches: gradients of L_total with respect
// to adapters, projector and head must match central differences.
class EndToEndGradient : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg.image_side = 8;
    cfg.patch_side = 2;
    cfg.channels = 1;
    cfg.dim = 8;
    cfg.depth = 3;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.lora_rank = 2;
    bb = init_frozen_backbone(cfg, 3);
    RngStream rng(4);
    adapters = AdapterSet::init(cfg, rng.split(1));
    auto fill = rng.split(2);
    for (auto& ad : adapters.all())
      for (auto& x : ad.b.mutable_data()) x = 0.3 * fill.normal();
    g = Projector::init(cfg.dim, cfg.dim, rng.split(3));
    head = ClassifierHead::init(cfg.dim, rng.split(4));
    std::vector<double> px(2 * 64);
    auto pr = rng.split(5);
    for (auto& v : px) v = pr.uniform();
    images = Tensor::from({2, 1, 8, 8}, std::move(px));
    auto sr = rng.split(6);
    specs = {sample_shuffle_spec(sr, 4, {}), sample_shuffle_spec(sr, 4, {})};
    mix = sample_mix_spec(sr, labels, cfg.depth, cfg.num_patches(), 0.3);
  }

  Tensor loss() const {
    auto e = patch_embed(images, bb);
    BranchOutputs out;
    out.cls = model_forward(embed_tokens(e, bb), bb, &adapters).cls;
    out.cls_s = model_forward(apply_shuffle(e, bb, specs), bb, &adapters).cls;
    const MixSpec m = mix;
    out.cls_m = model_forward(embed_tokens(e, bb), bb, &adapters,
                              LayerHook{m.layer, [m](const Tensor& t) { return mix_batch(t, m); }})
                    .cls;
    return compute_objectives(out, labels, g, head, LossWeights{}).total;
  }

  ViTConfig cfg;
  FrozenBackbone bb;
  AdapterSet adapters;
  Projector g;
  ClassifierHead head;
  Tensor images;
  std::vector<ShuffleSpec> specs;
  MixSpec mix;
  std::vector<int> labels{1, 1};
};

TEST_F(EndToEndGradient, AdaptersProjectorAndHead) {
  std::vector<std::pair<std::string, Tensor>> targets{
      {"block0.query.A", adapters.get(0, Proj::query).a}, {"block1.value.B", adapters.get(1, Proj::value).b},
      {"block2.mlp_out.A", adapters.get(2, Proj::mlp_out).a}, {"block0.mlp_in.B", adapters.get(0, Proj::mlp_in).b},
      {"projector.0.weight", g.layers[0].weight},           {"projector.2.bias", g.layers[2].bias},
      {"head.weight", head.fc.weight},                       {"head.bias", head.fc.bias}};
  for (auto& [name, t] : targets) {
    auto report = check_gradients([&](const Tensor&) { return loss(); }, t, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed) << name << " max rel error " << report.max_rel_error;
  }
}

}  // namespace
}  // namespace udd
