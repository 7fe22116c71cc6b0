// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "udd/rng.hpp"
#include "udd/tensor.hpp"

namespace udd {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  /// Weight ~ N(0, 1/in), bias zero; both trainable.
  static Linear init(std::size_t in, std::size_t out, RngStream& rng);
  Tensor operator()(const Tensor& x) const;
};

/// g(.): three affine layers D -> D -> D -> D_proj with GELU between them.
struct Projector {
  std::array<Linear, 3> layers;

  static Projector init(std::size_t dim, std::size_t proj_dim, RngStream rng);
  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> params() const;
};

/// D -> 2 logits, index 0 real and 1 fake.
struct ClassifierHead {
  Linear fc;

  static ClassifierHead init(std::size_t dim, RngStream rng);
  Tensor forward(const Tensor& x) const { return fc(x); }
  std::vector<Tensor> params() const { return {fc.weight, fc.bias}; }
};

/// SimCLR-style loss for one anchor: -log(e^{s+} / (e^{s+} + sum e^{s-})),
/// s = cosine similarity / tau. All vectors are [D]; negatives may be empty.
Tensor nt_xent(const Tensor& anchor, const Tensor& positive, const std::vector<Tensor>& negatives, double tau);

/// Batched term for one (original, view) pair. Row i uses view_i as its
/// positive and every other sample's original and view as negatives; the
/// result is the batch mean. z, view: [n, D].
Tensor contrastive_term(const Tensor& z, const Tensor& view, double tau);

/// L_con = term(z, z_s) + term(z, z_m).
Tensor contrastive_total(const Tensor& z, const Tensor& z_s, const Tensor& z_m, double tau);

/// JS divergence in nats of two probability vectors of equal length.
Tensor js_divergence(const Tensor& p, const Tensor& q);

/// Batch mean of JS(softmax(l), softmax(l_s)) + JS(softmax(l), softmax(l_m)).
Tensor align_loss(const Tensor& logits, const Tensor& logits_s, const Tensor& logits_m);

/// Mean of -log softmax(logits)[label]. Labels must be 0 or 1.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

struct LossWeights {
  double tau = 0.1;
  double lambda_con = 0.1;
  double lambda_align = 0.1;
};

struct LossComponents {
  Tensor total, ce, con, align;

  double total_value() const { return total.item(); }
};

Tensor total_loss(const Tensor& ce, const Tensor& con, const Tensor& align, const LossWeights& w);

/// Class tokens of the three branches, each [n, D], from shared parameters.
struct BranchOutputs {
  Tensor cls, cls_s, cls_m;
};

/// Projects and classifies all three branches and assembles every loss term.
/// Cross-entropy reads the original branch only.
LossComponents compute_objectives(const BranchOutputs& out, std::span<const int> labels, const Projector& g,
                                  const ClassifierHead& head, const LossWeights& w);

}  // namespace udd
