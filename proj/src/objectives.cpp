// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace udd {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive: tau must be positive, got " + std::to_string(tau));
}

void require_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, RngStream& rng) {
  std::vector<double> w(in * out);
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& x : w) x = sd * rng.normal();
  return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

Projector Projector::init(std::size_t dim, std::size_t proj_dim, RngStream rng) {
  Projector p;
  p.layers[0] = Linear::init(dim, dim, rng);
  p.layers[1] = Linear::init(dim, dim, rng);
  p.layers[2] = Linear::init(dim, proj_dim, rng);
  return p;
}

Tensor Projector::forward(const Tensor& x) const {
  return layers[2](gelu(layers[1](gelu(layers[0](x)))));
}

std::vector<Tensor> Projector::params() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

ClassifierHead ClassifierHead::init(std::size_t dim, RngStream rng) { return {Linear::init(dim, 2, rng)}; }

Tensor nt_xent(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives, double tau) {
  check_tau(tau);
  if (anchor.rank() != 1 || positive.shape() != anchor.shape()) {
    throw std::invalid_argument("nt_xent: anchor " + shape_str(anchor.shape()) + " vs positive " +
                                shape_str(positive.shape()));
  }
  const std::size_t d = anchor.dim(0);
  std::vector<Tensor> rows{reshape(positive, {1, d})};
  for (const auto& n : negatives) {
    if (n.shape() != anchor.shape()) throw std::invalid_argument("nt_xent: negative " + shape_str(n.shape()));
    rows.push_back(reshape(n, {1, d}));
  }
  auto a = l2_normalize_rows(reshape(anchor, {1, d}));
  auto others = l2_normalize_rows(concat(rows, 0));
  auto logits = scale(matmul(a, transpose(others)), 1.0 / tau);  // [1, k+1]
  const std::vector<unsigned char> mask(rows.size(), 1);
  const std::size_t zero = 0;
  return sum(sub(masked_logsumexp_rows(logits, mask), pick(logits, std::span(&zero, 1))));
}

Tensor contrastive_term(const Tensor& z, const Tensor& view, double tau) {
  check_tau(tau);
  require_pair("contrastive_term", z, view);
  const std::size_t n = z.dim(0);
  auto zn = l2_normalize_rows(z);
  auto vn = l2_normalize_rows(view);
  // Row i: [sim(z_i, view_j) for all j | sim(z_i, z_j) for j != i].
  auto logits = scale(concat({matmul(zn, transpose(vn)), matmul(zn, transpose(zn))}, 1), 1.0 / tau);
  std::vector<unsigned char> mask(n * 2 * n, 1);
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * 2 * n + n + i] = 0;
    diag[i] = i;
  }
  return mean(sub(masked_logsumexp_rows(logits, mask), pick(logits, diag)));
}

Tensor contrastive_total(const Tensor& z, const Tensor& z_s, const Tensor& z_m, double tau) {
  return add(contrastive_term(z, z_s, tau), contrastive_term(z, z_m, tau));
}

Tensor js_divergence(const Tensor& p, const Tensor& q) {
  if (p.rank() != 1 || p.shape() != q.shape()) {
    throw std::invalid_argument("js_divergence: shape mismatch " + shape_str(p.shape()) + " vs " +
                                shape_str(q.shape()));
  }
  const std::size_t k = p.dim(0);
  return sum(js_divergence_rows(reshape(p, {1, k}), reshape(q, {1, k})));
}

Tensor align_loss(const Tensor& logits, const Tensor& logits_s, const Tensor& logits_m) {
  require_pair("align_loss", logits, logits_s);
  require_pair("align_loss", logits, logits_m);
  auto p = softmax(logits, 1);
  return add(mean(js_divergence_rows(p, softmax(logits_s, 1))), mean(js_divergence_rows(p, softmax(logits_m, 1))));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[i]) + " is not 0 or 1");
    }
    cols[i] = static_cast<std::size_t>(labels[i]);
  }
  return scale(mean(pick(log_softmax(logits, 1), cols)), -1.0);
}

Tensor total_loss(const Tensor& ce, const Tensor& con, const Tensor& align, const LossWeights& w) {
  return add(ce, add(scale(con, w.lambda_con), scale(align, w.lambda_align)));
}

LossComponents compute_objectives(const BranchOutputs& out, std::span<const int> labels, const Projector& g,
                                  const ClassifierHead& head, const LossWeights& w) {
  LossComponents c;
  auto logits = head.forward(out.cls);
  c.ce = cross_entropy(logits, labels);
  c.con = contrastive_total(g.forward(out.cls), g.forward(out.cls_s), g.forward(out.cls_m), w.tau);
  c.align = align_loss(logits, head.forward(out.cls_s), head.forward(out.cls_m));
  c.total = total_loss(c.ce, c.con, c.align, w);
  return c;
}

}  // namespace udd
