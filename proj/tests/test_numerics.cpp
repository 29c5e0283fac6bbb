#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtlswin/gradcheck.hpp"
#include "mtlswin/graph.hpp"
#include "mtlswin/ops.hpp"

using namespace mtlswin;

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t[5] == 1.5f);
  CHECK_THROWS_AS(Tensor<float>({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);

  Tensor<float> v = t.reshaped({6});
  CHECK(v.shares_data(t));
  Tensor<float> c = t.clone();
  CHECK_FALSE(c.shares_data(t));
  c[0] = 9.0f;
  CHECK(t[0] == 1.5f);
}

TEST_CASE("backward: linear loss gives unit gradients") {
  auto x = input_leaf(Tensor<double>::from_data({3}, {5, -1, 2}));
  backward(sum_all(x));
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("backward: sum of squares gives 2x") {
  auto x = input_leaf(Tensor<double>::from_data({3}, {1, 2, 3}));
  backward(sum_all(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: gradient accumulates across multiple uses") {
  Parameter<double> p(Tensor<double>::from_data({2}, {1.0, 2.0}));
  Var<double> a = leaf(p), b = leaf(p);
  backward(add(sum_all(a), dot(b, constant(Tensor<double>::from_data({2}, {3.0, 4.0})))));
  CHECK(p.grad[0] == doctest::Approx(4.0));  // 1 + 3
  CHECK(p.grad[1] == doctest::Approx(5.0));  // 1 + 4
}

TEST_CASE("frozen parameters receive no gradient and stay bit-identical") {
  Parameter<double> frozen(Tensor<double>::from_data({2}, {1.0, -1.0}), /*trainable=*/false);
  Parameter<double> live(Tensor<double>::from_data({2}, {0.5, 0.5}));
  Var<double> y = sum_all(mul(leaf(frozen), leaf(live)));
  backward(y);
  CHECK(frozen.grad[0] == 0.0);
  CHECK(frozen.grad[1] == 0.0);
  CHECK(live.grad[0] == doctest::Approx(1.0));
  CHECK(frozen.value[0] == 1.0);
}

TEST_CASE("backward rejects non-scalar roots and non-finite values") {
  auto x = input_leaf(Tensor<double>({2, 2}, 1.0));
  CHECK_THROWS_AS(backward(mul(x, x)), std::invalid_argument);

  auto bad = input_leaf(Tensor<double>::from_data({1}, {std::nan("")}));
  CHECK_THROWS_AS(backward(sum_all(mul(bad, bad))), std::runtime_error);
}

TEST_CASE("no-grad mode builds value-only graphs") {
  Parameter<double> p(Tensor<double>({4}, 2.0));
  NoGradGuard ng;
  Var<double> y = sum_all(mul(leaf(p), leaf(p)));
  CHECK(y.item() == doctest::Approx(16.0));
  CHECK_FALSE(y.needs_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("gradcheck: exact zero error for linear functions") {
  // Dyadic values and a power-of-two eps keep every probe sum exact, so the
  // central difference of a linear function is exact too.
  Tensor<double> x = Tensor<double>::from_data({5}, {0.5, -0.25, 1.75, 2.0, -0.125});
  const double eps = 0.0009765625;  // 2^-10
  double err = gradcheck<double>([](const Var<double>& v) { return sum_all(v); }, x, eps);
  CHECK(err == 0.0);

  // And for generic values the error stays at rounding level.
  Rng rng(3);
  Tensor<double> y = random_tensor({5}, rng);
  CHECK(gradcheck<double>([](const Var<double>& v) { return sum_all(v); }, y, 1e-5) < 1e-9);
}

TEST_CASE("gradcheck: eps outside [1e-6, 1e-3] is rejected") {
  Tensor<double> x({3}, 0.5);
  auto f = [](const Var<double>& v) { return sum_all(v); };
  CHECK_THROWS_AS(gradcheck<double>(f, x, 1e-7), std::invalid_argument);
  CHECK_THROWS_AS(gradcheck<double>(f, x, 1e-2), std::invalid_argument);
}

TEST_CASE("gradcheck: non-deterministic functions are detected") {
  int calls = 0;
  auto f = [&calls](const Var<double>& v) {
    ++calls;
    return scale(sum_all(v), 1.0 + 1e-9 * calls);
  };
  Tensor<double> x({3}, 1.0);
  CHECK_THROWS_AS(gradcheck<double>(f, x, 1e-5), std::runtime_error);
}

TEST_CASE("every primitive passes gradcheck below 1e-5 at 64-bit") {
  for (const auto& row : primitive_gradcheck_suite()) {
    INFO(row.name);
    CHECK(row.max_err < 1e-5);
  }
}

TEST_CASE("reshape and permute are exact index bijections") {
  Rng rng(11);
  Tensor<double> x = random_tensor({3, 4, 5}, rng);

  auto v = constant(x);
  auto round_trip = reshape(reshape(v, {60}), {3, 4, 5});
  CHECK(round_trip.value().same_values(x));

  auto p = permute(permute(v, {2, 0, 1}), {1, 2, 0});
  CHECK(p.value().same_values(x));

  // Row-gather by a permutation map, then by its inverse.
  std::vector<int64_t> fwd(12);
  for (int64_t i = 0; i < 12; ++i) fwd[static_cast<size_t>(i)] = i;
  Rng shuffler(5);
  shuffler.shuffle(fwd.begin(), fwd.end());
  std::vector<int64_t> inv(12);
  for (int64_t i = 0; i < 12; ++i) inv[static_cast<size_t>(fwd[static_cast<size_t>(i)])] = i;
  auto g = gather_rows(constant(x), make_index_map(std::move(fwd)), 12, 5, {12, 5});
  auto back = gather_rows(g, make_index_map(std::move(inv)), 12, 5, {3, 4, 5});
  CHECK(back.value().same_values(x));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(7);
  Tensor<double> x = random_tensor({6, 9}, rng, -30.0, 30.0);
  auto p = softmax_rows(constant(x));
  for (int64_t r = 0; r < 6; ++r) {
    double s = 0;
    for (int64_t c = 0; c < 9; ++c) s += p.value()[r * 9 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}
