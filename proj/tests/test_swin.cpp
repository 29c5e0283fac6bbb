#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "mtlswin/gradcheck.hpp"
#include "mtlswin/swin.hpp"

using namespace mtlswin;

namespace {

Tensor<double> rand_tokens(const Shape& s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return random_tensor(s, rng, lo, hi);
}

}  // namespace

TEST_CASE("patch embed: shape arithmetic at reference and toy sizes") {
  Rng rng(1);
  PatchEmbed<float> big(224, 224, 1, 96, rng);
  Tensor<float> img({2, 224, 224, 1}, 0.25f);
  Var<float> tokens = big(constant(img));
  CHECK(tokens.shape() == Shape{2, 56 * 56, 96});

  PatchEmbed<float> toy(8, 8, 1, 8, rng);
  Var<float> t2 = toy(constant(Tensor<float>({1, 8, 8, 1}, 0.5f)));
  CHECK(t2.shape() == Shape{1, 2 * 2, 8});
}

TEST_CASE("patch embed: zero image gives bias-replicated projections") {
  Rng rng(2);
  PatchEmbed<double> pe(8, 8, 1, 6, rng);
  for (int64_t i = 0; i < pe.proj.bias.size(); ++i) pe.proj.bias.value[i] = 0.1 * double(i + 1);

  // The projection of a zero patch is exactly the bias row.
  Var<double> proj_only = pe.proj(constant(Tensor<double>({1, 4, 16}, 0.0)));
  for (int64_t r = 0; r < 4; ++r) {
    for (int64_t c = 0; c < 6; ++c) {
      CHECK(proj_only.value()[r * 6 + c] == pe.proj.bias.value[c]);
    }
  }
  // Through the layer norm all token rows stay identical.
  Var<double> tokens = pe(constant(Tensor<double>({1, 8, 8, 1}, 0.0)));
  for (int64_t r = 1; r < 4; ++r) {
    for (int64_t c = 0; c < 6; ++c) {
      CHECK(tokens.value()[r * 6 + c] == tokens.value()[c]);
    }
  }
}

TEST_CASE("window partition: 56x56 grid with window 7 gives 64 windows of 49") {
  IndexMap m = grid::window_partition_map(56, 56, 7);
  CHECK(m->size() == 56 * 56);
  // First window covers rows 0..6 x cols 0..6.
  CHECK((*m)[0] == 0);
  CHECK((*m)[48] == 6 * 56 + 6);
  // Map is a permutation.
  std::vector<int64_t> seen(m->size(), 0);
  for (int64_t v : *m) seen[static_cast<size_t>(v)]++;
  CHECK(std::all_of(seen.begin(), seen.end(), [](int64_t c) { return c == 1; }));
}

TEST_CASE("cyclic shift then inverse shift is the identity permutation") {
  for (auto [h, w, s] : std::vector<std::array<int64_t, 3>>{{8, 8, 2}, {6, 6, 3}, {4, 4, 1}}) {
    IndexMap fwd = grid::roll_map(h, w, s, s);
    IndexMap inv = grid::roll_map(h, w, -s, -s);
    for (int64_t i = 0; i < h * w; ++i) {
      CHECK((*inv)[static_cast<size_t>((*fwd)[static_cast<size_t>(i)])] == i);
    }
  }
}

TEST_CASE("zero-shift single-window attention equals a dense O(n^2) oracle") {
  const int64_t win = 4, t = win * win, c = 16, heads = 2, dh = c / heads;
  Rng rng(33);
  WindowAttention<double> attn(c, heads, win, rng);
  Tensor<double> x = rand_tokens({1, t, c}, 77);
  Var<double> got = attn(constant(x), nullptr);

  // Independent dense multi-head attention with the same parameters.
  auto& wqkv = attn.qkv.weight.value;
  auto& bqkv = attn.qkv.bias.value;
  auto& wproj = attn.proj.weight.value;
  auto& bproj = attn.proj.bias.value;
  std::vector<double> q(t * c), k(t * c), v(t * c);
  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < 3 * c; ++j) {
      double acc = bqkv[j];
      for (int64_t a = 0; a < c; ++a) acc += x[i * c + a] * wqkv[a * 3 * c + j];
      if (j < c) q[i * c + j] = acc;
      else if (j < 2 * c) k[i * c + (j - c)] = acc;
      else v[i * c + (j - 2 * c)] = acc;
    }
  }
  std::vector<double> ctx(t * c, 0.0);
  const int64_t span = 2 * win - 1;
  for (int64_t hh = 0; hh < heads; ++hh) {
    for (int64_t i = 0; i < t; ++i) {
      std::vector<double> logits(t);
      for (int64_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (int64_t d = 0; d < dh; ++d) acc += q[i * c + hh * dh + d] * k[j * c + hh * dh + d];
        const int64_t ry = i / win - j / win + win - 1;
        const int64_t rx = i % win - j % win + win - 1;
        logits[static_cast<size_t>(j)] = acc / std::sqrt(static_cast<double>(dh)) +
                                         attn.rel_bias.value[hh * span * span + ry * span + rx];
      }
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - m);
        z += l;
      }
      for (int64_t j = 0; j < t; ++j) {
        for (int64_t d = 0; d < dh; ++d) {
          ctx[i * c + hh * dh + d] += logits[static_cast<size_t>(j)] / z * v[j * c + hh * dh + d];
        }
      }
    }
  }
  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      double acc = bproj[j];
      for (int64_t a = 0; a < c; ++a) acc += ctx[i * c + a] * wproj[a * c + j];
      CHECK(got.value()[i * c + j] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("shifted-window mask zeroes cross-boundary attention exactly") {
  Rng rng(4);
  SwinBlock<double> blk(8, 2, 8, 8, 4, /*shifted=*/true, rng);
  REQUIRE(blk.shift == 2);
  const int64_t t = 16;
  const int64_t nw = 4;

  // Masked scores -> softmax: masked entries exactly 0, rows sum to 1.
  Tensor<double> scores = rand_tokens({nw * 2, t, t}, 9, -3.0, 3.0);
  Var<double> masked = add_const_tiled(constant(scores), blk.attn_mask);
  Var<double> p = softmax_rows(masked);
  int64_t masked_entries = 0;
  for (int64_t g = 0; g < nw * 2; ++g) {
    for (int64_t i = 0; i < t; ++i) {
      double row_sum = 0.0;
      for (int64_t j = 0; j < t; ++j) {
        const double mv = blk.attn_mask[(g * t + i) * t + j];
        const double pv = p.value()[(g * t + i) * t + j];
        row_sum += pv;
        if (mv != 0.0) {
          CHECK(pv == 0.0);
          ++masked_entries;
        }
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  CHECK(masked_entries > 0);

  // The full shifted block still runs and keeps shapes.
  Tensor<double> x = rand_tokens({2, 64, 8}, 10);
  Var<double> y = blk(constant(x));
  CHECK(y.shape() == Shape{2, 64, 8});
  CHECK(y.value().all_finite());
}

TEST_CASE("window shrinks to the grid and shift disables on single-window grids") {
  Rng rng(6);
  SwinBlock<double> blk(8, 1, 4, 4, 7, /*shifted=*/true, rng);
  CHECK(blk.win == 4);
  CHECK(blk.shift == 0);
  CHECK_THROWS_AS((SwinBlock<double>(8, 1, 6, 6, 4, false, rng)), std::invalid_argument);
}

TEST_CASE("patch merge: shape arithmetic") {
  Rng rng(7);
  PatchMerge<double> m56(56, 56, 96, rng);
  CHECK(m56(constant(Tensor<double>({1, 56 * 56, 96}, 0.1))).shape() == Shape{1, 28 * 28, 192});
  PatchMerge<double> m2(2, 2, 8, rng);
  CHECK(m2(constant(Tensor<double>({3, 4, 8}, 0.2))).shape() == Shape{3, 1, 16});
  CHECK_THROWS_AS((PatchMerge<double>(3, 3, 8, rng)), std::invalid_argument);
}

TEST_CASE("patch merge: each output token reads exactly its 2x2 neighborhood") {
  const int64_t h = 6, w = 6, c = 4;
  IndexMap m = grid::merge_rows_map(h, w);
  Tensor<double> x = rand_tokens({1, h * w, c}, 12);
  Var<double> base = gather_rows(constant(x), m, h * w, c, {1, h * w / 4, 4 * c});

  for (auto [ti, tj] : std::vector<std::array<int64_t, 2>>{{0, 0}, {1, 2}, {2, 1}}) {
    for (auto [di, dj] : std::vector<std::array<int64_t, 2>>{{0, 0}, {1, 0}, {0, 1}, {1, 1}}) {
      Tensor<double> pert = x.clone();
      const int64_t row = (2 * ti + di) * w + (2 * tj + dj);
      pert[row * c + 1] += 0.5;
      Var<double> out = gather_rows(constant(pert), m, h * w, c, {1, h * w / 4, 4 * c});
      int64_t changed_groups = 0;
      for (int64_t g = 0; g < h * w / 4; ++g) {
        bool diff = false;
        for (int64_t e = 0; e < 4 * c; ++e) {
          diff |= out.value()[g * 4 * c + e] != base.value()[g * 4 * c + e];
        }
        if (diff) {
          ++changed_groups;
          CHECK(g == ti * (w / 2) + tj);
        }
      }
      CHECK(changed_groups == 1);
    }
  }
}

TEST_CASE("patch expand: shape arithmetic") {
  Rng rng(8);
  PatchExpand<double> e7(7, 7, 768, rng);
  CHECK(e7(constant(Tensor<double>({1, 49, 768}, 0.1))).shape() == Shape{1, 14 * 14, 384});
  PatchExpand<double> e1(1, 1, 16, rng);
  CHECK(e1(constant(Tensor<double>({2, 1, 16}, 0.3))).shape() == Shape{2, 4, 8});
  CHECK_THROWS_AS((PatchExpand<double>(2, 2, 7, rng)), std::invalid_argument);
}

TEST_CASE("patch expand rearrange is a bijection of values") {
  const int64_t h = 3, w = 5, c2 = 8;  // tokens carry 2C = 8 channels into the rearrange
  IndexMap m = grid::expand_elems_map(h, w, c2 / 4);
  REQUIRE(m->size() == static_cast<size_t>(h * w * c2));
  Tensor<double> x = rand_tokens({1, h * w, c2}, 13);
  Var<double> y = gather_elems(constant(x), m, h * w * c2, {1, 4 * h * w, c2 / 4});
  std::multiset<double> before(x.data(), x.data() + x.size());
  std::multiset<double> after(y.value().data(), y.value().data() + y.value().size());
  CHECK(before == after);
}

TEST_CASE("patch expand undoes patch merge shapes for all valid inputs") {
  Rng rng(14);
  for (auto [h, w, c] : std::vector<std::array<int64_t, 3>>{{4, 4, 8}, {8, 8, 16}, {2, 6, 4}, {14, 14, 384}}) {
    PatchMerge<double> merge(h, w, c, rng);
    PatchExpand<double> expand(h / 2, w / 2, 2 * c, rng);
    Tensor<double> x({1, h * w, c}, 0.3);
    Var<double> merged = merge(constant(x));
    CHECK(merged.shape() == Shape{1, h * w / 4, 2 * c});
    Var<double> back = expand(merged);
    CHECK(back.shape() == x.shape());
  }
}

TEST_CASE("final expand: shapes and a sampled gradcheck through the full path") {
  Rng rng(15);
  FinalExpand<float> fe(56, 56, 96, 2, rng);
  CHECK(fe(constant(Tensor<float>({1, 56 * 56, 96}, 0.05f))).shape() == Shape{1, 224 * 224, 2});
  FinalExpand<float> fe1(56, 56, 96, 1, rng);
  CHECK(fe1(constant(Tensor<float>({1, 56 * 56, 96}, 0.05f))).shape() == Shape{1, 224 * 224, 1});

  FinalExpand<double> toy(4, 4, 8, 2, rng);
  Tensor<double> x = rand_tokens({1, 16, 8}, 16, -0.5, 0.5);
  Tensor<double> readout = rand_tokens({1, 16 * 16, 2}, 17);
  auto f = [&toy, &readout](const Var<double>& v) {
    return dot(toy(v), constant(readout));
  };
  CHECK(gradcheck<double>(f, x, 1e-5, /*max_components=*/24) < 1e-5);

  // Parameter-side paths through both expand linears and the head.
  auto loss = [&toy, &readout, &x]() { return dot(toy(constant(x)), constant(readout)); };
  CHECK(gradcheck_param<double>(loss, toy.head.weight, 1e-5, 8) < 1e-5);
  CHECK(gradcheck_param<double>(loss, toy.up1.expand.weight, 1e-5, 8) < 1e-5);
  CHECK(gradcheck_param<double>(loss, toy.up2.norm.gamma, 1e-5, 8) < 1e-5);
}
