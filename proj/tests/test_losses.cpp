#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtlswin/gradcheck.hpp"
#include "mtlswin/losses.hpp"

using namespace mtlswin;

namespace {

Var<double> probs_row(std::vector<double> p) {
  const int64_t n = static_cast<int64_t>(p.size());
  return constant(Tensor<double>::from_data({1, n}, std::move(p)));
}

}  // namespace

TEST_CASE("cross entropy: hand-evaluated values") {
  Tensor<double> truth0 = Tensor<double>::from_data({1, 2}, {1, 0});

  CHECK(cross_entropy(probs_row({1.0, 0.0}), truth0).item() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cross_entropy(probs_row({0.5, 0.5}), truth0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(cross_entropy(probs_row({0.9, 0.1}), truth0).item() ==
        doctest::Approx(-std::log(0.9)).epsilon(1e-9));
}

TEST_CASE("cross entropy: nonnegative, zero exactly at a one-hot match") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> logits = random_tensor({1, 4}, rng, -4.0, 4.0);
    Tensor<double> onehot({1, 4});
    onehot[rng.randint(4)] = 1.0;
    double v = cross_entropy(softmax_rows(constant(logits)), onehot).item();
    CHECK(v >= 0.0);
    CHECK(v > 0.0);  // softmax of finite logits is never exactly one-hot
  }
  Tensor<double> exact = Tensor<double>::from_data({1, 3}, {0, 1, 0});
  CHECK(cross_entropy(constant(exact), exact).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dice loss: hand-evaluated values") {
  auto dice = [](std::vector<double> p, std::vector<double> q) {
    const int64_t n = static_cast<int64_t>(p.size());
    return dice_loss(constant(Tensor<double>::from_data({n}, std::move(q))),
                     Tensor<double>::from_data({n}, std::move(p)))
        .item();
  };
  CHECK(dice({1, 1, 0, 0}, {1, 1, 0, 0}) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(dice({1, 1, 1, 1}, {0, 0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(dice({1, 1, 0, 0}, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-5));
  // Hand value of Eq.-style formula with the documented smoothing:
  // 1 - (2*1 + 1e-5) / (4 + 1e-5).
  CHECK(dice({1, 1, 0, 0}, {1, 0, 1, 0}) ==
        doctest::Approx(1.0 - (2.0 + 1e-5) / (4.0 + 1e-5)).epsilon(1e-12));
  // Empty mask and empty prediction: smoothing makes the loss exactly 0.
  CHECK(dice({0, 0, 0}, {0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dice loss: bounded and decreasing in overlap at fixed mass") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 8;
    Tensor<double> p({n});
    for (int64_t i = 0; i < n; ++i) p[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Tensor<double> q({n});
    for (int64_t i = 0; i < n; ++i) q[i] = rng.uniform();
    double v = dice_loss(constant(q), p).item();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-4);
  }
  // Same total mass, growing overlap -> strictly smaller loss.
  Tensor<double> p = Tensor<double>::from_data({4}, {1, 1, 0, 0});
  double lo = dice_loss(constant(Tensor<double>::from_data({4}, {0.9, 0.9, 0.1, 0.1})), p).item();
  double hi = dice_loss(constant(Tensor<double>::from_data({4}, {0.1, 0.1, 0.9, 0.9})), p).item();
  CHECK(lo < hi);
}

TEST_CASE("dice loss gradcheck stays below 1e-6 at 64-bit") {
  Rng rng(9);
  Tensor<double> mask({12});
  for (int64_t i = 0; i < 12; ++i) mask[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  Tensor<double> q = random_tensor({12}, rng, 0.05, 0.95);
  double err = gradcheck<double>(
      [&mask](const Var<double>& v) { return dice_loss(v, mask); }, q, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("mse: hand-evaluated values and homogeneity") {
  auto mse = [](std::vector<double> p, std::vector<double> q) {
    const int64_t n = static_cast<int64_t>(p.size());
    return mse_loss(constant(Tensor<double>::from_data({n}, std::move(q))),
                    Tensor<double>::from_data({n}, std::move(p)))
        .item();
  };
  CHECK(mse({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
  CHECK(mse({0, 2}, {0, 0}) == doctest::Approx(2.0).epsilon(1e-12));
  const double base = mse({0, 2, 1}, {1, 0, 3});
  const double scaled = mse({0, 6, 3}, {3, 0, 9});  // residuals x3
  CHECK(scaled == doctest::Approx(9.0 * base).epsilon(1e-9));
}

TEST_CASE("default task weights match the training recipe") {
  TaskWeights w3 = ModelConfig::default_weights(TaskSet{.cls = true, .seg = true, .rec = true});
  CHECK(w3.cls == 0.3);
  CHECK(w3.seg == 0.4);
  CHECK(w3.rec == 0.4);
  TaskWeights w2s = ModelConfig::default_weights(TaskSet{.cls = true, .seg = true});
  CHECK(w2s.cls == 0.4);
  CHECK(w2s.seg == 0.6);
  TaskWeights w2r = ModelConfig::default_weights(TaskSet{.cls = true, .rec = true});
  CHECK(w2r.cls == 0.4);
  CHECK(w2r.rec == 0.6);
  CHECK(w3.ce == 0.4);
  CHECK(w3.dice == 0.6);
}

TEST_CASE("weighted total: unit parts give exactly 1.1; zero parts give 0") {
  TaskSet t3{.cls = true, .seg = true, .rec = true};
  TaskLossValues unit{1.0, 1.0, 1.0, 0.0};
  CHECK(weighted_total(unit, ModelConfig::default_weights(t3), t3) == 1.1);
  TaskLossValues zero{};
  CHECK(weighted_total(zero, ModelConfig::default_weights(t3), t3) == 0.0);
}

namespace {

/// Builds a synthetic batch of per-sample segmentation inputs and returns
/// both the graph loss and a per-sample oracle average.
struct SegCase {
  LossBatch<double> batch;
  Tensor<double> logits;
  int64_t b, pixels;
};

SegCase random_seg_case(Rng& rng, int64_t b, int64_t pixels, double mask_prob) {
  SegCase sc;
  sc.b = b;
  sc.pixels = pixels;
  sc.logits = random_tensor({b, pixels, 2}, rng, -2.0, 2.0);
  sc.batch.seg_onehot = Tensor<double>({b * pixels, 2});
  sc.batch.seg_fg = Tensor<double>({b, pixels});
  sc.batch.mask_flags = Tensor<double>({b});
  for (int64_t i = 0; i < b; ++i) {
    if (rng.bernoulli(mask_prob)) {
      sc.batch.mask_flags[i] = 1.0;
      sc.batch.n_masked++;
      for (int64_t p = 0; p < pixels; ++p) {
        const bool fg = rng.bernoulli(0.5);
        sc.batch.seg_onehot[(i * pixels + p) * 2 + (fg ? 1 : 0)] = 1.0;
        if (fg) sc.batch.seg_fg[i * pixels + p] = 1.0;
      }
    }
  }
  return sc;
}

/// Definition-level oracle: per-sample CE (pixel mean) and Dice computed
/// independently with plain loops, then averaged over masked samples.
double seg_loss_oracle(const SegCase& sc, const TaskWeights& w) {
  double total = 0.0;
  int64_t masked = 0;
  for (int64_t i = 0; i < sc.b; ++i) {
    if (sc.batch.mask_flags[i] == 0.0) continue;
    masked++;
    double ce = 0.0, inter = 0.0, psum = 0.0, qsum = 0.0;
    for (int64_t p = 0; p < sc.pixels; ++p) {
      const double l0 = sc.logits[(i * sc.pixels + p) * 2];
      const double l1 = sc.logits[(i * sc.pixels + p) * 2 + 1];
      const double m = std::max(l0, l1);
      const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      const double q1 = e1 / (e0 + e1), q0 = 1.0 - q1;
      const bool fg = sc.batch.seg_fg[i * sc.pixels + p] == 1.0;
      ce += -std::log(std::max(fg ? q1 : q0, 1e-12));
      inter += fg ? q1 : 0.0;
      psum += fg ? 1.0 : 0.0;
      qsum += q1;
    }
    ce /= static_cast<double>(sc.pixels);
    const double dice = 1.0 - (2.0 * inter + 1e-5) / (psum + qsum + 1e-5);
    total += w.ce * ce + w.dice * dice;
  }
  return masked == 0 ? 0.0 : total / static_cast<double>(masked);
}

}  // namespace

TEST_CASE("segmentation loss equals the per-sample oracle on 100 random batches") {
  Rng rng(77);
  TaskWeights w;  // ce 0.4, dice 0.6
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t b = 1 + rng.randint(5);
    const int64_t pixels = 4 + rng.randint(12);
    SegCase sc = random_seg_case(rng, b, pixels, 0.6);
    const double got = segmentation_loss(constant(sc.logits), sc.batch, w).item();
    const double want = seg_loss_oracle(sc, w);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("segmentation loss: masking rule on the worked example") {
  // Batch of 4 with masks on samples 0 and 2: loss = (a + c) / 2.
  Rng rng(123);
  SegCase sc = random_seg_case(rng, 4, 6, 1.0);
  sc.batch.mask_flags[1] = 0.0;
  sc.batch.mask_flags[3] = 0.0;
  sc.batch.n_masked = 2;
  TaskWeights w;
  double full = segmentation_loss(constant(sc.logits), sc.batch, w).item();

  auto single = [&sc, &w](int64_t keep) {
    SegCase one = sc;
    for (int64_t i = 0; i < 4; ++i) one.batch.mask_flags[i] = (i == keep) ? 1.0 : 0.0;
    one.batch.n_masked = 1;
    return segmentation_loss(constant(one.logits), one.batch, w).item();
  };
  CHECK(full == doctest::Approx((single(0) + single(2)) / 2.0).epsilon(1e-12));
}

TEST_CASE("segmentation loss: unmasked batch returns a detached zero") {
  Rng rng(31);
  SegCase sc = random_seg_case(rng, 3, 5, 0.0);
  REQUIRE(sc.batch.n_masked == 0);
  auto logits_leaf = input_leaf(sc.logits.clone());
  Var<double> loss = segmentation_loss(logits_leaf, sc.batch, TaskWeights{});
  CHECK(loss.item() == 0.0);
  CHECK_FALSE(loss.needs_grad());  // no gradient path back to the logits
}

TEST_CASE("d(total)/d(seg parameter) scales with lambda_seg") {
  // A tiny differentiable stand-in: seg logits from one linear map.
  Rng rng(55);
  const int64_t b = 2, pixels = 6;
  SegCase sc = random_seg_case(rng, b, pixels, 1.0);
  Tensor<double> features = random_tensor({b * pixels, 3}, rng);
  Parameter<double> w_seg(random_tensor({3, 2}, rng));

  auto seg_grad = [&](double lambda_seg) {
    w_seg.zero_grad();
    ModelConfig cfg;
    Var<double> logits = matmul(constant(features), leaf(w_seg));
    Var<double> seg = segmentation_loss(reshape(logits, {b, pixels, 2}), sc.batch, TaskWeights{});
    backward(scale(seg, lambda_seg));
    return w_seg.grad.clone();
  };
  Tensor<double> g1 = seg_grad(1.0);
  Tensor<double> g04 = seg_grad(0.4);
  for (int64_t i = 0; i < g1.size(); ++i) {
    CHECK(g04[i] == doctest::Approx(0.4 * g1[i]).epsilon(1e-6));
  }
}
