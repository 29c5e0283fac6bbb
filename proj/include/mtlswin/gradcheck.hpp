#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtlswin/graph.hpp"
#include "mtlswin/ops.hpp"
#include "mtlswin/rng.hpp"

namespace mtlswin {

template <typename S>
using ScalarFn = std::function<Var<S>(const Var<S>&)>;

/// Central-difference check of reverse-mode gradients. Returns the max over
/// checked components of |analytic - numeric| / max(1, |analytic|).
///
/// f must be deterministic; this is probed by evaluating it twice at x and
/// demanding bit-identical results. With max_components > 0 only a seeded
/// random subset of components is differenced (the analytic gradient is
/// always complete).
template <typename S>
double gradcheck(const ScalarFn<S>& f, const Tensor<S>& x, S eps, int64_t max_components = 0,
                 uint64_t sample_seed = 17) {
  if (!(eps >= S(1e-6) && eps <= S(1e-3))) {
    throw std::invalid_argument("gradcheck: eps must lie in [1e-6, 1e-3]");
  }

  auto probe = [&f](const Tensor<S>& t) {
    NoGradGuard ng;
    Var<S> out = f(constant(t));
    if (out.size() != 1) throw std::invalid_argument("gradcheck: f must return a scalar");
    return out.item();
  };

  const S v1 = probe(x);
  const S v2 = probe(x);
  if (std::memcmp(&v1, &v2, sizeof(S)) != 0) {
    throw std::runtime_error("gradcheck: f is non-deterministic across probe evaluations");
  }

  Var<S> in = input_leaf(x.clone());
  Var<S> out = f(in);
  backward(out);
  Tensor<S> analytic = in.grad().clone();

  std::vector<int64_t> idx;
  if (max_components > 0 && max_components < x.size()) {
    Rng rng(sample_seed);
    std::vector<int64_t> all(static_cast<size_t>(x.size()));
    for (int64_t i = 0; i < x.size(); ++i) all[static_cast<size_t>(i)] = i;
    rng.shuffle(all.begin(), all.end());
    idx.assign(all.begin(), all.begin() + max_components);
  } else {
    idx.resize(static_cast<size_t>(x.size()));
    for (int64_t i = 0; i < x.size(); ++i) idx[static_cast<size_t>(i)] = i;
  }

  double max_err = 0.0;
  Tensor<S> xp = x.clone();
  for (int64_t i : idx) {
    const S saved = xp[i];
    xp[i] = saved + eps;
    const double fp = static_cast<double>(probe(xp));
    xp[i] = saved - eps;
    const double fm = static_cast<double>(probe(xp));
    xp[i] = saved;
    const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
    const double a = static_cast<double>(analytic[i]);
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

/// Central-difference check of dL/dp for a Parameter embedded in a model.
/// loss_fn must rebuild the loss graph from the model's current state.
template <typename S>
double gradcheck_param(const std::function<Var<S>()>& loss_fn, Parameter<S>& p, S eps,
                       int64_t max_components = 0, uint64_t sample_seed = 17) {
  if (!(eps >= S(1e-6) && eps <= S(1e-3))) {
    throw std::invalid_argument("gradcheck: eps must lie in [1e-6, 1e-3]");
  }
  auto probe = [&loss_fn]() {
    NoGradGuard ng;
    Var<S> out = loss_fn();
    if (out.size() != 1) throw std::invalid_argument("gradcheck: loss must be scalar");
    return out.item();
  };
  const S v1 = probe();
  const S v2 = probe();
  if (std::memcmp(&v1, &v2, sizeof(S)) != 0) {
    throw std::runtime_error("gradcheck: loss is non-deterministic across probe evaluations");
  }

  const bool was_trainable = p.trainable;
  p.trainable = true;
  p.zero_grad();
  backward(loss_fn());
  Tensor<S> analytic = p.grad.clone();
  p.trainable = was_trainable;

  std::vector<int64_t> idx;
  if (max_components > 0 && max_components < p.size()) {
    Rng rng(sample_seed);
    std::vector<int64_t> all(static_cast<size_t>(p.size()));
    for (int64_t i = 0; i < p.size(); ++i) all[static_cast<size_t>(i)] = i;
    rng.shuffle(all.begin(), all.end());
    idx.assign(all.begin(), all.begin() + max_components);
  } else {
    idx.resize(static_cast<size_t>(p.size()));
    for (int64_t i = 0; i < p.size(); ++i) idx[static_cast<size_t>(i)] = i;
  }

  double max_err = 0.0;
  for (int64_t i : idx) {
    const S saved = p.value[i];
    p.value[i] = saved + eps;
    const double fp = static_cast<double>(probe());
    p.value[i] = saved - eps;
    const double fm = static_cast<double>(probe());
    p.value[i] = saved;
    const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
    const double a = static_cast<double>(analytic[i]);
    max_err = std::max(max_err, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return max_err;
}

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct GradcheckRow {
  std::string name;
  double max_err = 0.0;
};

/// Finite-difference battery over every differentiable primitive, each on
/// several shapes, at 64-bit. Used by the verification suites and the CLI.
inline std::vector<GradcheckRow> primitive_gradcheck_suite(uint64_t seed = 20240901) {
  using T = Tensor<double>;
  using V = Var<double>;
  Rng rng(seed);
  std::vector<GradcheckRow> rows;

  auto run = [&rows](const std::string& name, std::vector<std::pair<ScalarFn<double>, T>> cases) {
    double worst = 0.0;
    for (auto& [f, x] : cases) worst = std::max(worst, gradcheck<double>(f, x, 1e-5));
    rows.push_back({name, worst});
  };

  // A scalar readout that exposes every component: dot with fixed weights.
  auto readout = [&rng](const Shape& s) {
    return random_tensor(s, rng, -1.0, 1.0);
  };
  auto with_readout = [](std::function<V(const V&)> g, T r) {
    return ScalarFn<double>([g = std::move(g), r = std::move(r)](const V& x) {
      V y = g(x);
      return dot(y, constant(r.reshaped(y.shape())));
    });
  };

  const std::vector<Shape> shapes3 = {{3, 4}, {2, 5, 3}, {7}};

  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      T other = random_tensor(s, rng);
      cs.push_back({with_readout([other](const V& x) { return add(x, constant(other)); }, readout(s)),
                    random_tensor(s, rng)});
    }
    run("add", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      T other = random_tensor(s, rng);
      cs.push_back({with_readout([other](const V& x) { return sub(constant(other), x); }, readout(s)),
                    random_tensor(s, rng)});
    }
    run("sub", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      T other = random_tensor(s, rng);
      cs.push_back({with_readout([other](const V& x) { return mul(x, constant(other)); }, readout(s)),
                    random_tensor(s, rng)});
    }
    run("mul", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      T denom = random_tensor(s, rng, 0.5, 2.0);
      cs.push_back({with_readout([denom](const V& x) { return divide(x, constant(denom)); }, readout(s)),
                    random_tensor(s, rng)});
      T numer = random_tensor(s, rng);
      cs.push_back({with_readout([numer](const V& x) { return divide(constant(numer), x); }, readout(s)),
                    random_tensor(s, rng, 0.5, 2.0)});
    }
    run("divide", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      cs.push_back({with_readout([](const V& x) { return scale(x, 1.7); }, readout(s)), random_tensor(s, rng)});
      cs.push_back({with_readout([](const V& x) { return add_scalar(x, -0.3); }, readout(s)),
                    random_tensor(s, rng)});
    }
    run("scale/add_scalar", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      cs.push_back({with_readout([](const V& x) { return log_clamped(x, 1e-12); }, readout(s)),
                    random_tensor(s, rng, 0.1, 2.0)});
    }
    run("log_clamped", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const auto& s : shapes3) {
      cs.push_back({with_readout([](const V& x) { return gelu(x); }, readout(s)), random_tensor(s, rng, -2.0, 2.0)});
    }
    run("gelu", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const Shape& s : std::vector<Shape>{{2, 5}, {3, 4, 4}, {1, 9}}) {
      cs.push_back({with_readout([](const V& x) { return softmax_rows(x); }, readout(s)),
                    random_tensor(s, rng, -3.0, 3.0)});
    }
    run("softmax", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const Shape& s : std::vector<Shape>{{4, 6}, {2, 3, 5}, {5, 2}}) {
      const int64_t c = s.back();
      T gamma = random_tensor({c}, rng, 0.5, 1.5);
      T beta = random_tensor({c}, rng);
      T xin = random_tensor(s, rng);
      cs.push_back({with_readout(
                        [gamma, beta](const V& x) {
                          return layer_norm(x, constant(gamma), constant(beta), 1e-5);
                        },
                        readout(s)),
                    xin});
      cs.push_back({with_readout(
                        [xin, beta](const V& g) {
                          return layer_norm(constant(xin), g, constant(beta), 1e-5);
                        },
                        readout(xin.shape())),
                    gamma});
      cs.push_back({with_readout(
                        [xin, gamma](const V& b) {
                          return layer_norm(constant(xin), constant(gamma), b, 1e-5);
                        },
                        readout(xin.shape())),
                    beta});
    }
    run("layer_norm", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [r, k, c] : std::vector<std::array<int64_t, 3>>{{3, 4, 5}, {1, 6, 2}, {5, 2, 3}}) {
      T w = random_tensor({k, c}, rng);
      T a = random_tensor({r, k}, rng);
      cs.push_back({with_readout([w](const V& x) { return matmul(x, constant(w)); }, readout({r, c})),
                    a});
      cs.push_back({with_readout([a](const V& x) { return matmul(constant(a), x); }, readout({r, c})),
                    w});
    }
    run("matmul", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [g, m, k, c] : std::vector<std::array<int64_t, 4>>{{2, 3, 4, 5}, {1, 2, 2, 2}, {3, 4, 2, 3}}) {
      for (bool tb : {false, true}) {
        Shape bs = tb ? Shape{g, c, k} : Shape{g, k, c};
        T b = random_tensor(bs, rng);
        T a = random_tensor({g, m, k}, rng);
        cs.push_back({with_readout([b, tb](const V& x) { return bmm(x, constant(b), tb); }, readout({g, m, c})),
                      a});
        cs.push_back({with_readout([a, tb](const V& x) { return bmm(constant(a), x, tb); }, readout({g, m, c})),
                      b});
      }
    }
    run("bmm", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [r, c] : std::vector<std::array<int64_t, 2>>{{4, 3}, {2, 7}, {6, 2}}) {
      T x = random_tensor({r, c}, rng);
      T b = random_tensor({c}, rng);
      cs.push_back({with_readout([b](const V& v) { return add_bias(v, constant(b)); }, readout({r, c})), x});
      cs.push_back({with_readout([x](const V& v) { return add_bias(constant(x), v); }, readout({r, c})), b});
    }
    run("add_bias", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [reps, e] : std::vector<std::array<int64_t, 2>>{{3, 4}, {1, 6}, {5, 2}}) {
      T x = random_tensor({reps * e}, rng);
      T y = random_tensor({e}, rng);
      cs.push_back({with_readout([y](const V& v) { return add_tiled(v, constant(y)); }, readout({reps * e})), x});
      cs.push_back({with_readout([x](const V& v) { return add_tiled(constant(x), v); }, readout({reps * e})), y});
      cs.push_back({with_readout([y](const V& v) { return add_const_tiled(v, y); }, readout({reps * e})), x});
    }
    run("add_tiled", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const Shape& s : std::vector<Shape>{{2, 6}, {3, 2, 2}, {12}}) {
      cs.push_back({with_readout([](const V& x) { return reshape(x, {x.size()}); }, readout({shape_numel(s)})),
                    random_tensor(s, rng)});
    }
    run("reshape", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    cs.push_back({with_readout([](const V& x) { return permute(x, {1, 0}); }, readout({4, 3})),
                  random_tensor({3, 4}, rng)});
    cs.push_back({with_readout([](const V& x) { return permute(x, {2, 0, 1}); }, readout({4, 2, 3})),
                  random_tensor({2, 3, 4}, rng)});
    cs.push_back({with_readout([](const V& x) { return permute(x, {0, 2, 1, 3}); }, readout({2, 4, 3, 2})),
                  random_tensor({2, 3, 4, 2}, rng)});
    run("permute", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    Rng mrng(seed + 5);
    for (auto [b, rows, len] : std::vector<std::array<int64_t, 3>>{{2, 4, 3}, {1, 6, 2}, {3, 3, 4}}) {
      std::vector<int64_t> m(static_cast<size_t>(rows));
      for (int64_t i = 0; i < rows; ++i) m[static_cast<size_t>(i)] = i;
      mrng.shuffle(m.begin(), m.end());
      IndexMap map = make_index_map(std::move(m));
      cs.push_back({with_readout(
                        [map, rows, len](const V& x) {
                          return gather_rows(x, map, rows, len, x.shape());
                        },
                        readout({b, rows, len})),
                    random_tensor({b, rows, len}, rng)});
    }
    run("gather_rows", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    Rng mrng(seed + 6);
    for (auto [b, in_e, out_e] : std::vector<std::array<int64_t, 3>>{{2, 6, 6}, {1, 4, 9}, {3, 5, 3}}) {
      std::vector<int64_t> m(static_cast<size_t>(out_e));
      for (int64_t i = 0; i < out_e; ++i) m[static_cast<size_t>(i)] = mrng.randint(in_e);  // collisions allowed
      IndexMap map = make_index_map(std::move(m));
      cs.push_back({with_readout(
                        [map, in_e, b, out_e](const V& x) {
                          return gather_elems(x, map, in_e, {b, out_e});
                        },
                        readout({b, out_e})),
                    random_tensor({b, in_e}, rng)});
    }
    run("gather_elems", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [r, ca, cb] : std::vector<std::array<int64_t, 3>>{{3, 2, 4}, {1, 5, 1}, {4, 3, 3}}) {
      T a = random_tensor({r, ca}, rng);
      T b = random_tensor({r, cb}, rng);
      cs.push_back({with_readout([b](const V& v) { return concat_cols(v, constant(b)); }, readout({r, ca + cb})),
                    a});
      cs.push_back({with_readout([a](const V& v) { return concat_cols(constant(a), v); }, readout({r, ca + cb})),
                    b});
    }
    run("concat", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [r, c] : std::vector<std::array<int64_t, 2>>{{4, 3}, {2, 5}, {6, 2}}) {
      cs.push_back({with_readout([c = c](const V& x) { return select_col(x, c - 1); }, readout({r})),
                    random_tensor({r, c}, rng)});
      cs.push_back({with_readout([](const V& x) { return row_sum(x); }, readout({r})), random_tensor({r, c}, rng)});
      cs.push_back({with_readout([](const V& x) { return row_mean(x); }, readout({r})), random_tensor({r, c}, rng)});
    }
    run("select_col/row_sum/row_mean", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (auto [b, t, c] : std::vector<std::array<int64_t, 3>>{{2, 4, 3}, {1, 6, 2}, {3, 2, 5}}) {
      cs.push_back({with_readout([](const V& x) { return mean_tokens(x); }, readout({b, c})),
                    random_tensor({b, t, c}, rng)});
    }
    run("mean_tokens", std::move(cs));
  }
  {
    std::vector<std::pair<ScalarFn<double>, T>> cs;
    for (const Shape& s : shapes3) {
      cs.push_back({ScalarFn<double>([](const V& x) { return mean_all(x); }), random_tensor(s, rng)});
      cs.push_back({ScalarFn<double>([](const V& x) { return sum_all(x); }), random_tensor(s, rng)});
      T other = random_tensor(s, rng);
      cs.push_back({ScalarFn<double>([other](const V& x) { return dot(x, constant(other)); }),
                    random_tensor(s, rng)});
    }
    run("mean_all/sum_all/dot", std::move(cs));
  }

  return rows;
}

}  // namespace mtlswin
