#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mtlswin/graph.hpp"
#include "mtlswin/tensor.hpp"

namespace mtlswin {

/// Shared, precomputed index table used by the gather ops. Built once per
/// layer (token grids are static per model), shared into backward closures.
using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

inline IndexMap make_index_map(std::vector<int64_t> v) {
  return std::make_shared<const std::vector<int64_t>>(std::move(v));
}

namespace detail {

template <typename S>
std::shared_ptr<Node<S>> new_node(Tensor<S> value, std::initializer_list<Var<S>> parents) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p.defined() && p.needs_grad()) {
        n->needs_grad = true;
        break;
      }
    }
    if (n->needs_grad) {
      for (const auto& p : parents) n->parents.push_back(p.node_ptr());
    }
  }
  return n;
}

template <typename S>
void check_same_numel(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": size mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check_same_numel(a, b, "add");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() + b.value().arr();
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn]() {
      if (an->needs_grad) an->ensure_grad().arr() += self->grad.arr();
      if (bn->needs_grad) bn->ensure_grad().arr() += self->grad.arr();
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check_same_numel(a, b, "sub");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() - b.value().arr();
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn]() {
      if (an->needs_grad) an->ensure_grad().arr() += self->grad.arr();
      if (bn->needs_grad) bn->ensure_grad().arr() -= self->grad.arr();
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::check_same_numel(a, b, "mul");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() * b.value().arr();
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn]() {
      if (an->needs_grad) an->ensure_grad().arr() += self->grad.arr() * bn->value.arr();
      if (bn->needs_grad) bn->ensure_grad().arr() += self->grad.arr() * an->value.arr();
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> divide(const Var<S>& a, const Var<S>& b) {
  detail::check_same_numel(a, b, "divide");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() / b.value().arr();
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn]() {
      if (an->needs_grad) an->ensure_grad().arr() += self->grad.arr() / bn->value.arr();
      if (bn->needs_grad)
        bn->ensure_grad().arr() -= self->grad.arr() * self->value.arr() / bn->value.arr();
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() * c;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node();
    n->backprop = [self, an, c]() { an->ensure_grad().arr() += self->grad.arr() * c; };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() + c;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node();
    n->backprop = [self, an]() { an->ensure_grad().arr() += self->grad.arr(); };
  }
  return Var<S>(n);
}

/// log(max(x, floor)); gradient is 1/x above the floor and 0 below it.
template <typename S>
Var<S> log_clamped(const Var<S>& x, S floor_value) {
  Tensor<S> out(x.shape());
  out.arr() = x.value().arr().max(floor_value).log();
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, floor_value]() {
      xn->ensure_grad().arr() +=
          (xn->value.arr() > floor_value).select(self->grad.arr() / xn->value.arr(), S(0));
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> gelu(const Var<S>& x) {
  const int64_t m = x.size();
  Tensor<S> out(x.shape());
  const S* xd = x.value().data();
  S* od = out.data();
  const double inv_sqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < m; ++i) {
    double v = static_cast<double>(xd[i]);
    od[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn]() {
      const S* xd2 = xn->value.data();
      const S* gd = self->grad.data();
      S* gx = xn->ensure_grad().data();
      const double inv_sqrt2pi = 0.3989422804014326779;
      for (int64_t i = 0; i < xn->value.size(); ++i) {
        double v = static_cast<double>(xd2[i]);
        double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += gd[i] * static_cast<S>(cdf + v * pdf);
      }
    };
  }
  return Var<S>(n);
}

// ---------------------------------------------------------------------------
// Rows / reductions (last extent is the row length)
// ---------------------------------------------------------------------------

/// Numerically stable softmax over the last extent.
template <typename S>
Var<S> softmax_rows(const Var<S>& x) {
  const int64_t c = x.value().last_dim();
  const int64_t r = x.size() / c;
  Tensor<S> out(x.shape());
  auto xm = x.value().mat(r, c);
  auto om = out.mat(r, c);
  om = (xm.colwise() - xm.rowwise().maxCoeff()).array().exp();
  Eigen::Array<S, Eigen::Dynamic, 1> sums = om.array().rowwise().sum();
  om.array().colwise() /= sums;
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, r, c]() {
      auto p = self->value.mat(r, c).array();
      auto g = self->grad.mat(r, c).array();
      Eigen::Array<S, Eigen::Dynamic, 1> dots = (g * p).rowwise().sum();
      xn->ensure_grad().mat(r, c).array() += p * (g.colwise() - dots);
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> row_sum(const Var<S>& x) {
  const int64_t c = x.value().last_dim();
  const int64_t r = x.size() / c;
  Tensor<S> out(Shape{r});
  out.mat(r, 1) = x.value().mat(r, c).rowwise().sum();
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, r, c]() {
      xn->ensure_grad().mat(r, c).array().colwise() += self->grad.arr();
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> row_mean(const Var<S>& x) {
  const int64_t c = x.value().last_dim();
  return scale(row_sum(x), S(1) / static_cast<S>(c));
}

/// (B, N, C) -> (B, C), mean over the token axis.
template <typename S>
Var<S> mean_tokens(const Var<S>& x) {
  if (x.value().rank() != 3) {
    throw std::invalid_argument("mean_tokens: expected rank-3, got " + shape_str(x.shape()));
  }
  const int64_t b = x.value().dim(0), t = x.value().dim(1), c = x.value().dim(2);
  Tensor<S> out(Shape{b, c});
  auto xm = x.value().mat(b * t, c);
  auto om = out.mat(b, c);
  for (int64_t i = 0; i < b; ++i) om.row(i) = xm.middleRows(i * t, t).colwise().mean();
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, b, t, c]() {
      auto gm = self->grad.mat(b, c);
      auto gx = xn->ensure_grad().mat(b * t, c);
      const S inv = S(1) / static_cast<S>(t);
      for (int64_t i = 0; i < b; ++i) gx.middleRows(i * t, t).rowwise() += gm.row(i) * inv;
    };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> sum_all(const Var<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(x.value().arr().sum());
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn]() { xn->ensure_grad().arr() += self->grad[0]; };
  }
  return Var<S>(n);
}

template <typename S>
Var<S> mean_all(const Var<S>& x) {
  return scale(sum_all(x), S(1) / static_cast<S>(x.size()));
}

template <typename S>
Var<S> dot(const Var<S>& a, const Var<S>& b) {
  detail::check_same_numel(a, b, "dot");
  Tensor<S> out = Tensor<S>::scalar((a.value().arr() * b.value().arr()).sum());
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn]() {
      if (an->needs_grad) an->ensure_grad().arr() += self->grad[0] * bn->value.arr();
      if (bn->needs_grad) bn->ensure_grad().arr() += self->grad[0] * an->value.arr();
    };
  }
  return Var<S>(n);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// (..., K) x (K, N) -> (..., N); leading extents collapse to rows.
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& w) {
  if (w.value().rank() != 2) {
    throw std::invalid_argument("matmul: weight must be rank-2, got " + shape_str(w.shape()));
  }
  const int64_t k = w.value().dim(0), nn = w.value().dim(1);
  if (a.value().last_dim() != k) {
    throw std::invalid_argument("matmul: inner extents " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
  }
  const int64_t r = a.size() / k;
  Shape out_shape(a.shape());
  out_shape.back() = nn;
  Tensor<S> out(out_shape);
  out.mat(r, nn).noalias() = a.value().mat(r, k) * w.value().mat(k, nn);
  auto n = detail::new_node(std::move(out), {a, w});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *wn = w.node();
    n->backprop = [self, an, wn, r, k, nn]() {
      auto g = self->grad.mat(r, nn);
      if (an->needs_grad) an->ensure_grad().mat(r, k).noalias() += g * wn->value.mat(k, nn).transpose();
      if (wn->needs_grad) wn->ensure_grad().mat(k, nn).noalias() += an->value.mat(r, k).transpose() * g;
    };
  }
  return Var<S>(n);
}

/// Batched matmul over matching leading groups: (G, M, K) x (G, K, N), or
/// (G, M, K) x (G, N, K) with transpose_b.
template <typename S>
Var<S> bmm(const Var<S>& a, const Var<S>& b, bool transpose_b = false) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.value().dim(0) != b.value().dim(0)) {
    throw std::invalid_argument("bmm: want matching rank-3 " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int64_t g = a.value().dim(0), m = a.value().dim(1), k = a.value().dim(2);
  const int64_t bk = transpose_b ? b.value().dim(2) : b.value().dim(1);
  const int64_t nn = transpose_b ? b.value().dim(1) : b.value().dim(2);
  if (bk != k) {
    throw std::invalid_argument("bmm: inner extents " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<S> out(Shape{g, m, nn});
  {
    const S *ad = a.value().data(), *bd = b.value().data();
    S* od = out.data();
    for (int64_t i = 0; i < g; ++i) {
      typename Tensor<S>::ConstMatMap am(ad + i * m * k, m, k);
      typename Tensor<S>::MatMap om(od + i * m * nn, m, nn);
      if (transpose_b) {
        typename Tensor<S>::ConstMatMap bm(bd + i * nn * k, nn, k);
        om.noalias() = am * bm.transpose();
      } else {
        typename Tensor<S>::ConstMatMap bm(bd + i * k * nn, k, nn);
        om.noalias() = am * bm;
      }
    }
  }
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn, g, m, k, nn, transpose_b]() {
      const S *ad = an->value.data(), *bd = bn->value.data(), *gd = self->grad.data();
      S* ga = an->needs_grad ? an->ensure_grad().data() : nullptr;
      S* gb = bn->needs_grad ? bn->ensure_grad().data() : nullptr;
      for (int64_t i = 0; i < g; ++i) {
        typename Tensor<S>::ConstMatMap gm(gd + i * m * nn, m, nn);
        typename Tensor<S>::ConstMatMap am(ad + i * m * k, m, k);
        if (transpose_b) {
          typename Tensor<S>::ConstMatMap bm(bd + i * nn * k, nn, k);
          if (ga) typename Tensor<S>::MatMap(ga + i * m * k, m, k).noalias() += gm * bm;
          if (gb) typename Tensor<S>::MatMap(gb + i * nn * k, nn, k).noalias() += gm.transpose() * am;
        } else {
          typename Tensor<S>::ConstMatMap bm(bd + i * k * nn, k, nn);
          if (ga) typename Tensor<S>::MatMap(ga + i * m * k, m, k).noalias() += gm * bm.transpose();
          if (gb) typename Tensor<S>::MatMap(gb + i * k * nn, k, nn).noalias() += am.transpose() * gm;
        }
      }
    };
  }
  return Var<S>(n);
}

// ---------------------------------------------------------------------------
// Broadcast adds
// ---------------------------------------------------------------------------

/// (R, C) + (C,) with the bias added to every row.
template <typename S>
Var<S> add_bias(const Var<S>& x, const Var<S>& bias) {
  const int64_t c = x.value().last_dim();
  if (bias.size() != c) {
    throw std::invalid_argument("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  }
  const int64_t r = x.size() / c;
  Tensor<S> out(x.shape());
  out.mat(r, c) = x.value().mat(r, c).rowwise() + bias.value().mat(1, c).row(0);
  auto n = detail::new_node(std::move(out), {x, bias});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node(), *bn = bias.node();
    n->backprop = [self, xn, bn, r, c]() {
      if (xn->needs_grad) xn->ensure_grad().arr() += self->grad.arr();
      if (bn->needs_grad) bn->ensure_grad().mat(1, c) += self->grad.mat(r, c).colwise().sum();
    };
  }
  return Var<S>(n);
}

/// x + tile(y); x.size() must be a multiple of y.size().
template <typename S>
Var<S> add_tiled(const Var<S>& x, const Var<S>& y) {
  const int64_t e = y.size();
  if (e == 0 || x.size() % e != 0) {
    throw std::invalid_argument("add_tiled: " + shape_str(x.shape()) + " + " + shape_str(y.shape()));
  }
  const int64_t reps = x.size() / e;
  Tensor<S> out(x.shape());
  {
    auto om = out.mat(reps, e);
    om = x.value().mat(reps, e).rowwise() + y.value().mat(1, e).row(0);
  }
  auto n = detail::new_node(std::move(out), {x, y});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node(), *yn = y.node();
    n->backprop = [self, xn, yn, reps, e]() {
      if (xn->needs_grad) xn->ensure_grad().arr() += self->grad.arr();
      if (yn->needs_grad) yn->ensure_grad().mat(1, e) += self->grad.mat(reps, e).colwise().sum();
    };
  }
  return Var<S>(n);
}

/// x + tile(t) for a non-learned tensor t (e.g. attention masks).
template <typename S>
Var<S> add_const_tiled(const Var<S>& x, const Tensor<S>& t) {
  const int64_t e = t.size();
  if (e == 0 || x.size() % e != 0) {
    throw std::invalid_argument("add_const_tiled: " + shape_str(x.shape()) + " + " + shape_str(t.shape()));
  }
  const int64_t reps = x.size() / e;
  Tensor<S> out(x.shape());
  out.mat(reps, e) = x.value().mat(reps, e).rowwise() + t.mat(1, e).row(0);
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn]() { xn->ensure_grad().arr() += self->grad.arr(); };
  }
  return Var<S>(n);
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5)) {
  const int64_t c = x.value().last_dim();
  if (gamma.size() != c || beta.size() != c) {
    throw std::invalid_argument("layer_norm: feature extent mismatch on " + shape_str(x.shape()));
  }
  const int64_t r = x.size() / c;
  Tensor<S> out(x.shape());
  Tensor<S> xhat(Shape{r, c});
  Tensor<S> inv_std(Shape{r});
  {
    auto xm = x.value().mat(r, c);
    auto xh = xhat.mat(r, c);
    Eigen::Matrix<S, Eigen::Dynamic, 1> mu = xm.rowwise().mean();
    xh = xm.colwise() - mu;
    Eigen::Array<S, Eigen::Dynamic, 1> var = xh.array().square().rowwise().mean();
    inv_std.arr() = (var + eps).rsqrt();
    xh.array().colwise() *= inv_std.arr();
    out.mat(r, c) = (xh.array().rowwise() * gamma.value().mat(1, c).row(0).array()).rowwise() +
                    beta.value().mat(1, c).row(0).array();
  }
  auto n = detail::new_node(std::move(out), {x, gamma, beta});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node(), *gn = gamma.node(), *bn = beta.node();
    n->backprop = [self, xn, gn, bn, xhat, inv_std, r, c]() {
      auto g = self->grad.mat(r, c);
      auto xh = xhat.mat(r, c);
      if (gn->needs_grad) gn->ensure_grad().mat(1, c) += (g.array() * xh.array()).colwise().sum().matrix();
      if (bn->needs_grad) bn->ensure_grad().mat(1, c) += g.colwise().sum();
      if (xn->needs_grad) {
        Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dxh =
            g.array().rowwise() * gn->value.mat(1, c).row(0).array();
        Eigen::Array<S, Eigen::Dynamic, 1> m1 = dxh.rowwise().mean();
        Eigen::Array<S, Eigen::Dynamic, 1> m2 = (dxh * xh.array()).rowwise().mean();
        xn->ensure_grad().mat(r, c).array() +=
            ((dxh.colwise() - m1) - (xh.array().colwise() * m2)).colwise() * inv_std.arr();
      }
    };
  }
  return Var<S>(n);
}

// ---------------------------------------------------------------------------
// Shape movement
// ---------------------------------------------------------------------------

/// Same data, new shape (no copy either way).
template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn]() { xn->ensure_grad().arr() += self->grad.arr(); };
  }
  return Var<S>(n);
}

/// Per-sample element gather: out(b, e) = x(b, map[e]). The map must cover
/// [0, in_per_sample); repeated source indices are allowed (scatter-add on
/// the way back).
template <typename S>
Var<S> gather_elems(const Var<S>& x, IndexMap map, int64_t in_per_sample, Shape out_shape) {
  if (in_per_sample <= 0 || x.size() % in_per_sample != 0) {
    throw std::invalid_argument("gather_elems: sample extent " + std::to_string(in_per_sample) + " on " +
                                shape_str(x.shape()));
  }
  const int64_t b = x.size() / in_per_sample;
  const int64_t e = static_cast<int64_t>(map->size());
  if (shape_numel(out_shape) != b * e) {
    throw std::invalid_argument("gather_elems: out shape " + shape_str(out_shape) + " != " +
                                std::to_string(b * e) + " elements");
  }
  Tensor<S> out(std::move(out_shape));
  {
    const S* xd = x.value().data();
    S* od = out.data();
    const int64_t* m = map->data();
    for (int64_t i = 0; i < b; ++i) {
      const S* src = xd + i * in_per_sample;
      S* dst = od + i * e;
      for (int64_t j = 0; j < e; ++j) dst[j] = src[m[j]];
    }
  }
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, map, in_per_sample, b, e]() {
      const S* gd = self->grad.data();
      S* gx = xn->ensure_grad().data();
      const int64_t* m = map->data();
      for (int64_t i = 0; i < b; ++i) {
        S* dst = gx + i * in_per_sample;
        const S* src = gd + i * e;
        for (int64_t j = 0; j < e; ++j) dst[m[j]] += src[j];
      }
    };
  }
  return Var<S>(n);
}

/// Per-sample row gather with contiguous rows of length row_len:
/// out(b, r, :) = x(b, map[r], :).
template <typename S>
Var<S> gather_rows(const Var<S>& x, IndexMap map, int64_t in_rows, int64_t row_len, Shape out_shape) {
  const int64_t per_sample = in_rows * row_len;
  if (per_sample <= 0 || x.size() % per_sample != 0) {
    throw std::invalid_argument("gather_rows: grid " + std::to_string(in_rows) + "x" +
                                std::to_string(row_len) + " on " + shape_str(x.shape()));
  }
  const int64_t b = x.size() / per_sample;
  const int64_t out_rows = static_cast<int64_t>(map->size());
  if (shape_numel(out_shape) != b * out_rows * row_len) {
    throw std::invalid_argument("gather_rows: out shape " + shape_str(out_shape) + " mismatch");
  }
  Tensor<S> out(std::move(out_shape));
  {
    const S* xd = x.value().data();
    S* od = out.data();
    const int64_t* m = map->data();
    for (int64_t i = 0; i < b; ++i) {
      const S* src = xd + i * per_sample;
      S* dst = od + i * out_rows * row_len;
      for (int64_t r = 0; r < out_rows; ++r) {
        std::copy(src + m[r] * row_len, src + (m[r] + 1) * row_len, dst + r * row_len);
      }
    }
  }
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, map, per_sample, b, out_rows, row_len]() {
      const S* gd = self->grad.data();
      S* gx = xn->ensure_grad().data();
      const int64_t* m = map->data();
      for (int64_t i = 0; i < b; ++i) {
        S* dst = gx + i * per_sample;
        const S* src = gd + i * out_rows * row_len;
        for (int64_t r = 0; r < out_rows; ++r) {
          typename Tensor<S>::ArrMap(dst + m[r] * row_len, row_len) +=
              typename Tensor<S>::ConstArrMap(src + r * row_len, row_len);
        }
      }
    };
  }
  return Var<S>(n);
}

/// General axis permutation (copies). perm[i] names the source axis that
/// lands at output axis i.
template <typename S>
Var<S> permute(const Var<S>& x, const std::vector<int>& perm) {
  const Shape& in_shape = x.shape();
  const int rank = x.value().rank();
  if (static_cast<int>(perm.size()) != rank) {
    throw std::invalid_argument("permute: perm rank mismatch on " + shape_str(in_shape));
  }
  std::vector<bool> seen(static_cast<size_t>(rank), false);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<size_t>(p)]) throw std::invalid_argument("permute: invalid axis list");
    seen[static_cast<size_t>(p)] = true;
  }
  std::vector<int64_t> in_strides(static_cast<size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<int64_t> map(static_cast<size_t>(x.size()));
  std::vector<int64_t> coord(static_cast<size_t>(rank), 0);
  for (int64_t o = 0; o < x.size(); ++o) {
    int64_t src = 0;
    for (int i = 0; i < rank; ++i) src += coord[i] * in_strides[perm[i]];
    map[static_cast<size_t>(o)] = src;
    for (int i = rank - 1; i >= 0; --i) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  return gather_elems(x, make_index_map(std::move(map)), x.size(), std::move(out_shape));
}

/// Column-wise concatenation of two row blocks with equal row counts.
template <typename S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  const int64_t ca = a.value().last_dim(), cb = b.value().last_dim();
  const int64_t r = a.size() / ca;
  if (b.size() / cb != r) {
    throw std::invalid_argument("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  Shape out_shape(a.shape());
  out_shape.back() = ca + cb;
  Tensor<S> out(out_shape);
  out.mat(r, ca + cb).leftCols(ca) = a.value().mat(r, ca);
  out.mat(r, ca + cb).rightCols(cb) = b.value().mat(r, cb);
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *an = a.node(), *bn = b.node();
    n->backprop = [self, an, bn, r, ca, cb]() {
      auto g = self->grad.mat(r, ca + cb);
      if (an->needs_grad) an->ensure_grad().mat(r, ca) += g.leftCols(ca);
      if (bn->needs_grad) bn->ensure_grad().mat(r, cb) += g.rightCols(cb);
    };
  }
  return Var<S>(n);
}

/// (R, C) -> (R,), one column.
template <typename S>
Var<S> select_col(const Var<S>& x, int64_t col) {
  const int64_t c = x.value().last_dim();
  const int64_t r = x.size() / c;
  if (col < 0 || col >= c) throw std::invalid_argument("select_col: column out of range");
  Tensor<S> out(Shape{r});
  out.mat(r, 1) = x.value().mat(r, c).col(col);
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    Node<S>*self = n.get(), *xn = x.node();
    n->backprop = [self, xn, r, c, col]() {
      xn->ensure_grad().mat(r, c).col(col) += self->grad.mat(r, 1);
    };
  }
  return Var<S>(n);
}

}  // namespace mtlswin
