// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "udd/kernels.hpp"
#include "udd/tensor.hpp"

namespace udd {

namespace {

using detail::Node;

bool wants(const detail::NodePtr& n) { return n->requires_grad; }

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw std::invalid_argument(op + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(t.shape()));
  }
}

// Splits a shape around `axis` into (outer, len, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::matmul_nn(a.data(), b.data(), out, m, k, n, false);
  return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) kernels::matmul_nt(self.grad, B.value, A.ensure_grad(), m, n, k, true);
    if (B.requires_grad) kernels::matmul_tn(A.value, self.grad, B.ensure_grad(), m, k, n, true);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    shape_error("bmm", a.shape(), b.shape());
  }
  const std::size_t t = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(t * m * n);
  kernels::bmm_nn(a.data(), b.data(), out, t, m, k, n, false);
  return make_op("bmm", {t, m, n}, std::move(out), {a, b}, [t, m, k, n](Node& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) kernels::bmm_nt(self.grad, B.value, A.ensure_grad(), t, m, n, k, true);
    if (B.requires_grad) kernels::bmm_tn(A.value, self.grad, B.ensure_grad(), t, m, k, n, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto v = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return make_op("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor transpose_last2(const Tensor& a) {
  require_rank("transpose_last2", a, 3);
  const std::size_t t = a.dim(0), r = a.dim(1), c = a.dim(2);
  std::vector<double> out(t * r * c);
  const auto v = a.data();
  for (std::size_t b = 0; b < t; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = v[b * r * c + i * c + j];
  return make_op("transpose_last2", {t, c, r}, std::move(out), {a}, [t, r, c](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          g[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!wants(in)) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t s = 0; s < 2; ++s) {
      auto& in = self.inputs[s];
      if (!wants(in)) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[s] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_op("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rank() != 1 || a.rank() == 0 || a.shape().back() != bias.dim(0)) {
    shape_error("add_bias", a.shape(), bias.shape());
  }
  const std::size_t d = bias.dim(0);
  const std::size_t rows = a.numel() / d;
  std::vector<double> out(a.numel());
  const auto av = a.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = av[r * d + j] + bv[j];
  return make_op("add_bias", a.shape(), std::move(out), {a, bias}, [rows, d](Node& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) {
      auto& g = A.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op("sum", {}, {s}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  return make_op("mean", {}, {s / n}, {a}, [n](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0] / n;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor swap_axes12(const Tensor& a) {
  require_rank("swap_axes12", a, 4);
  const std::size_t n0 = a.dim(0), n1 = a.dim(1), n2 = a.dim(2), n3 = a.dim(3);
  std::vector<double> out(a.numel());
  const auto v = a.data();
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k) {
        const double* src = v.data() + ((i * n1 + j) * n2 + k) * n3;
        double* dst = out.data() + ((i * n2 + k) * n1 + j) * n3;
        std::copy(src, src + n3, dst);
      }
  return make_op("swap_axes12", {n0, n2, n1, n3}, std::move(out), {a},
                 [n0, n1, n2, n3](Node& self) {
                   auto& g = self.inputs[0]->ensure_grad();
                   for (std::size_t i = 0; i < n0; ++i)
                     for (std::size_t j = 0; j < n1; ++j)
                       for (std::size_t k = 0; k < n2; ++k) {
                         double* dst = g.data() + ((i * n1 + j) * n2 + k) * n3;
                         const double* src = self.grad.data() + ((i * n2 + k) * n1 + j) * n3;
                         for (std::size_t l = 0; l < n3; ++l) dst[l] += src[l];
                       }
                 });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw std::invalid_argument("gather_rows: scalar input");
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty index list");
  const std::size_t n = a.dim(0);
  const std::size_t width = a.numel() / n;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * width);
  const auto v = a.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) {
      throw std::out_of_range("gather_rows: row " + std::to_string(idx[r]) + " of " +
                              shape_str(a.shape()));
    }
    std::copy(v.begin() + idx[r] * width, v.begin() + (idx[r] + 1) * width,
              out.begin() + r * width);
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  return make_op("gather_rows", std::move(shape), std::move(out), {a},
                 [idx = std::move(idx), width](Node& self) {
                   auto& g = self.inputs[0]->ensure_grad();
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (std::size_t j = 0; j < width; ++j)
                       g[idx[r] * width + j] += self.grad[r * width + j];
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    if (p.rank() != s0.size()) shape_error("concat", s0, p.shape());
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.dim(i) != s0[i]) shape_error("concat", s0, p.shape());
    lens.push_back(p.dim(axis));
    out_shape[axis] += p.dim(axis);
  }
  const auto sp = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].data();
    const std::size_t chunk = lens[p] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy(v.begin() + o * chunk, v.begin() + (o + 1) * chunk,
                out.begin() + o * sp.len * sp.inner + offset * sp.inner);
    offset += lens[p];
  }
  return make_op("concat", out_shape, std::move(out), parts, [sp, lens](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      auto& in = self.inputs[p];
      const std::size_t chunk = lens[p] * sp.inner;
      if (wants(in)) {
        auto& g = in->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t j = 0; j < chunk; ++j)
            g[o * chunk + j] += self.grad[o * sp.len * sp.inner + offset * sp.inner + j];
      }
      offset += lens[p];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range for " + shape_str(x.shape()));
  const auto sp = split_at(x.shape(), axis);
  std::vector<double> out(x.numel());
  if (sp.inner == 1) {
    kernels::softmax_rows(x.data(), out, sp.outer, sp.len);
  } else {
    const auto v = x.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < sp.len; ++j) mx = std::max(mx, v[base + j * sp.inner]);
        double s = 0.0;
        for (std::size_t j = 0; j < sp.len; ++j) {
          out[base + j * sp.inner] = std::exp(v[base + j * sp.inner] - mx);
          s += out[base + j * sp.inner];
        }
        for (std::size_t j = 0; j < sp.len; ++j) out[base + j * sp.inner] /= s;
      }
  }
  return make_op("softmax", x.shape(), std::move(out), {x}, [sp](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    if (sp.inner == 1) {
      kernels::softmax_rows_backward(self.value, self.grad, g, sp.outer, sp.len);
      return;
    }
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < sp.len; ++j)
          dot += self.grad[base + j * sp.inner] * self.value[base + j * sp.inner];
        for (std::size_t j = 0; j < sp.len; ++j) {
          const std::size_t q = base + j * sp.inner;
          g[q] += self.value[q] * (self.grad[q] - dot);
        }
      }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("log_softmax: axis out of range");
  const auto sp = split_at(x.shape(), axis);
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < sp.len; ++j)
        if (v[base + j * sp.inner] > v[base + arg * sp.inner]) arg = j;
      const double mx = v[base + arg * sp.inner];
      // The max term contributes exactly 1; log1p keeps tiny losses exact.
      double rest = 0.0;
      for (std::size_t j = 0; j < sp.len; ++j)
        if (j != arg) rest += std::exp(v[base + j * sp.inner] - mx);
      const double l = std::log1p(rest);
      for (std::size_t j = 0; j < sp.len; ++j) out[base + j * sp.inner] = (v[base + j * sp.inner] - mx) - l;
    }
  return make_op("log_softmax", x.shape(), std::move(out), {x}, [sp](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double total = 0.0;
        for (std::size_t j = 0; j < sp.len; ++j) total += self.grad[base + j * sp.inner];
        for (std::size_t j = 0; j < sp.len; ++j) {
          const std::size_t q = base + j * sp.inner;
          g[q] += self.grad[q] - std::exp(self.value[q]) * total;
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.shape().back() ||
      bias.dim(0) != x.shape().back()) {
    shape_error("layer_norm", x.shape(), gain.shape());
  }
  const std::size_t d = gain.dim(0);
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out, *xhat, *inv_std, rows, d, eps);
  return make_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                 [rows, d, xhat, inv_std](Node& self) {
                   auto& X = *self.inputs[0];
                   auto& G = *self.inputs[1];
                   auto& B = *self.inputs[2];
                   const auto& gy = self.grad;
                   if (G.requires_grad) {
                     auto& gg = G.ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) gg[j] += gy[r * d + j] * (*xhat)[r * d + j];
                   }
                   if (B.requires_grad) {
                     auto& gb = B.ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
                   }
                   if (!X.requires_grad) return;
                   auto& gx = X.ensure_grad();
                   const double dn = static_cast<double>(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double s1 = 0.0, s2 = 0.0;
                     for (std::size_t j = 0; j < d; ++j) {
                       const double dh = gy[r * d + j] * G.value[j];
                       s1 += dh;
                       s2 += dh * (*xhat)[r * d + j];
                     }
                     const double is = (*inv_std)[r];
                     for (std::size_t j = 0; j < d; ++j) {
                       const double dh = gy[r * d + j] * G.value[j];
                       gx[r * d + j] += is / dn * (dn * dh - s1 - (*xhat)[r * d + j] * s2);
                     }
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  kernels::gelu(x.data(), out);
  return make_op("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    auto& in = *self.inputs[0];
    kernels::gelu_backward(in.value, self.grad, in.ensure_grad());
  });
}

namespace {

// Source coordinate of output index i under the align-corners convention.
// Integer arithmetic before the single division keeps equal-size resizes exact.
inline double align_corners_src(std::size_t i, std::size_t in, std::size_t out) {
  if (out == 1 || in == 1) return 0.0;
  return static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1);
}

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = align_corners_src(i, in, out);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    t[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return t;
}

}  // namespace

// Visits the (row, col, weight) taps of output cell (i, j). Zero-weight taps
// are skipped so grid-aligned samples copy exactly.
template <typename Fn>
void for_each_tap(const std::vector<Tap>& ty, const std::vector<Tap>& tx, std::size_t i,
                  std::size_t j, Fn&& fn) {
  const Tap& a = ty[i];
  const Tap& b = tx[j];
  fn(a.lo, b.lo, (1.0 - a.frac) * (1.0 - b.frac));
  if (b.frac != 0.0) fn(a.lo, b.hi, (1.0 - a.frac) * b.frac);
  if (a.frac != 0.0) {
    fn(a.hi, b.lo, a.frac * (1.0 - b.frac));
    if (b.frac != 0.0) fn(a.hi, b.hi, a.frac * b.frac);
  }
}

Tensor bilinear_resize_grid(const Tensor& field, std::size_t out_h, std::size_t out_w) {
  require_rank("bilinear_resize_grid", field, 3);
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("bilinear_resize_grid: zero output extent");
  const std::size_t h = field.dim(0), w = field.dim(1), d = field.dim(2);
  auto ty = taps(h, out_h);
  auto tx = taps(w, out_w);
  std::vector<double> out(out_h * out_w * d);
  const auto v = field.data();
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j) {
      double* dst = out.data() + (i * out_w + j) * d;
      bool first = true;
      for_each_tap(ty, tx, i, j, [&](std::size_t y, std::size_t x, double wgt) {
        const double* src = v.data() + (y * w + x) * d;
        if (first) {
          for (std::size_t c = 0; c < d; ++c) dst[c] = wgt * src[c];
          first = false;
        } else {
          for (std::size_t c = 0; c < d; ++c) dst[c] += wgt * src[c];
        }
      });
    }
  return make_op("bilinear_resize_grid", {out_h, out_w, d}, std::move(out), {field},
                 [ty = std::move(ty), tx = std::move(tx), w, d, out_w](Node& self) {
                   auto& g = self.inputs[0]->ensure_grad();
                   for (std::size_t i = 0; i < ty.size(); ++i)
                     for (std::size_t j = 0; j < tx.size(); ++j) {
                       const double* gy = self.grad.data() + (i * out_w + j) * d;
                       for_each_tap(ty, tx, i, j, [&](std::size_t y, std::size_t x, double wgt) {
                         double* dst = g.data() + (y * w + x) * d;
                         for (std::size_t c = 0; c < d; ++c) dst[c] += wgt * gy[c];
                       });
                     }
                 });
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank("l2_normalize_rows", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.numel());
  std::vector<double> norms(rows);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += v[r * cols + j] * v[r * cols + j];
    if (s == 0.0) throw std::invalid_argument("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    norms[r] = std::sqrt(s);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = v[r * cols + j] / norms[r];
  }
  return make_op("l2_normalize_rows", x.shape(), std::move(out), {x},
                 [rows, cols, norms = std::move(norms)](Node& self) {
                   auto& g = self.inputs[0]->ensure_grad();
                   for (std::size_t r = 0; r < rows; ++r) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < cols; ++j)
                       dot += self.value[r * cols + j] * self.grad[r * cols + j];
                     for (std::size_t j = 0; j < cols; ++j)
                       g[r * cols + j] += (self.grad[r * cols + j] - self.value[r * cols + j] * dot) / norms[r];
                   }
                 });
}

Tensor masked_logsumexp_rows(const Tensor& x, std::span<const unsigned char> mask) {
  require_rank("masked_logsumexp_rows", x, 2);
  if (mask.size() != x.numel()) throw std::invalid_argument("masked_logsumexp_rows: mask size mismatch");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(rows);
  auto weights = std::make_shared<std::vector<double>>(x.numel(), 0.0);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t arg = cols;
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[r * cols + j] && (arg == cols || v[r * cols + j] > v[r * cols + arg])) arg = j;
    if (arg == cols) throw std::invalid_argument("masked_logsumexp_rows: row " + std::to_string(r) + " fully masked");
    const double mx = v[r * cols + arg];
    double rest = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[r * cols + j] && j != arg) rest += std::exp(v[r * cols + j] - mx);
    out[r] = mx + std::log1p(rest);
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[r * cols + j]) (*weights)[r * cols + j] = std::exp(v[r * cols + j] - out[r]);
  }
  return make_op("masked_logsumexp_rows", {rows}, std::move(out), {x}, [rows, cols, weights](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += self.grad[r] * (*weights)[r * cols + j];
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  require_rank("pick", x, 2);
  const std::size_t rows = x.dim(0), width = x.dim(1);
  if (cols.size() != rows) throw std::invalid_argument("pick: need one column per row");
  std::vector<std::size_t> c(cols.begin(), cols.end());
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (c[r] >= width) throw std::out_of_range("pick: column out of range");
    out[r] = x.data()[r * width + c[r]];
  }
  return make_op("pick", {rows}, std::move(out), {x}, [c = std::move(c), width](Node& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < c.size(); ++r) g[r * width + c[r]] += self.grad[r];
  });
}

Tensor js_divergence_rows(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape() || p.rank() != 2) shape_error("js_divergence_rows", p.shape(), q.shape());
  const std::size_t rows = p.dim(0), k = p.dim(1);
  const auto pv = p.data();
  const auto qv = q.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sp = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (pv[r * k + j] < 0.0 || qv[r * k + j] < 0.0)
        throw std::invalid_argument("js_divergence_rows: negative probability");
      sp += pv[r * k + j];
      sq += qv[r * k + j];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
      throw std::invalid_argument("js_divergence_rows: row " + std::to_string(r) + " is not on the simplex");
  }
  auto xlogy = [](double a, double m) { return a == 0.0 ? 0.0 : a * std::log(a / m); };
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double kl_p = 0.0, kl_q = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double a = pv[r * k + j], b = qv[r * k + j];
      const double m = 0.5 * (a + b);
      kl_p += xlogy(a, m);
      kl_q += xlogy(b, m);
    }
    out[r] = 0.5 * kl_p + 0.5 * kl_q;
  }
  // d/da of 0.5 KL(P||M) + 0.5 KL(Q||M) is 0.5 log(a / m).
  return make_op("js_divergence_rows", {rows}, std::move(out), {p, q}, [rows, k](Node& self) {
    auto& P = *self.inputs[0];
    auto& Q = *self.inputs[1];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < k; ++j) {
        const double a = P.value[r * k + j], b = Q.value[r * k + j];
        const double m = 0.5 * (a + b);
        if (P.requires_grad && a > 0.0) P.ensure_grad()[r * k + j] += self.grad[r] * 0.5 * std::log(a / m);
        if (Q.requires_grad && b > 0.0) Q.ensure_grad()[r * k + j] += self.grad[r] * 0.5 * std::log(b / m);
      }
  });
}

}  // namespace udd
