#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msui2i/core/autodiff.hpp"
#include "msui2i/core/rng.hpp"
#include "support/gradcheck.hpp"

using namespace msui2i;
using testutil::grad_check;
using testutil::random_tensor;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("elementwise ops: values and gradients") {
  Rng rng(7);
  auto a0 = random_tensor({2, 4, 4}, rng);
  auto b0 = random_tensor({2, 4, 4}, rng);

  auto check = [&](auto build) {
    auto res = grad_check(
        [&](const std::vector<Var>& ls) { return build(ls[0], ls[1]); },
        {make_leaf(a0), make_leaf(b0)});
    CHECK(res.max_rel_err < kTol);
  };

  check([](const Var& a, const Var& b) { return mean_all(mul(add(a, b), sub(a, b))); });
  check([](const Var& a, const Var& b) { return mean_all(square(add(scale(a, 0.3), b))); });
  check([](const Var& a, const Var& b) { return mean_all(sqrt_shift(square(sub(a, b)), 1e-8)); });
  check([](const Var& a, const Var& b) { return mean_all(tanh_op(add(a, add_scalar(b, 0.2)))); });
  check([](const Var& a, const Var& b) { return mean_all(leaky_relu(sub(a, b), 0.2)); });
}

TEST_CASE("relu and abs gradients away from the kink") {
  Rng rng(9);
  Tensor a0 = random_tensor({3, 5, 5}, rng);
  for (int64_t i = 0; i < a0.numel(); ++i)
    if (std::fabs(a0[i]) < 0.05) a0[i] = 0.1;  // keep clear of the nondifferentiable point
  auto res = grad_check([](const std::vector<Var>& ls) { return mean_all(relu(ls[0])); },
                        {make_leaf(a0)});
  CHECK(res.max_rel_err < kTol);
  res = grad_check([](const std::vector<Var>& ls) { return mean_all(abs_op(ls[0])); },
                   {make_leaf(a0)});
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("conv2d forward shapes") {
  Rng rng(3);
  auto x = make_const(random_tensor({3, 16, 16}, rng));
  auto w = make_const(random_tensor({8, 3, 7, 7}, rng, -0.1, 0.1));
  auto b = make_const(random_tensor({8}, rng, -0.1, 0.1));
  auto y = conv2d(x, w, b, 1, 3, PadMode::Reflect);
  CHECK(y->value.shape() == std::vector<int>{8, 16, 16});

  auto w2 = make_const(random_tensor({4, 3, 3, 3}, rng, -0.1, 0.1));
  auto b2 = make_const(random_tensor({4}, rng));
  auto y2 = conv2d(x, w2, b2, 2, 1, PadMode::Zero);
  CHECK(y2->value.shape() == std::vector<int>{4, 8, 8});

  auto w3 = make_const(random_tensor({2, 3, 4, 4}, rng, -0.1, 0.1));
  auto b3 = make_const(random_tensor({2}, rng));
  CHECK(conv2d(x, w3, b3, 2, 1, PadMode::Zero)->value.shape() == std::vector<int>{2, 8, 8});
  CHECK(conv2d(x, w3, b3, 1, 1, PadMode::Zero)->value.shape() == std::vector<int>{2, 15, 15});

  auto tiny = make_const(random_tensor({3, 2, 2}, rng));
  auto w4 = make_const(random_tensor({1, 3, 4, 4}, rng));
  auto b4 = make_const(random_tensor({1}, rng));
  CHECK_THROWS_AS(conv2d(tiny, w4, b4, 1, 0, PadMode::Zero), InvalidArgument);
}

TEST_CASE("conv2d matches a direct loop") {
  Rng rng(11);
  auto xv = random_tensor({2, 6, 5}, rng);
  auto wv = random_tensor({3, 2, 3, 3}, rng);
  auto bv = random_tensor({3}, rng);
  auto y = conv2d(make_const(xv), make_const(wv), make_const(bv), 2, 1, PadMode::Zero);

  const int oh = y->value.dim(1), ow = y->value.dim(2);
  for (int co = 0; co < 3; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = bv[co];
        for (int ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = oy * 2 + ky - 1, sx = ox * 2 + kx - 1;
              if (sy < 0 || sy >= 6 || sx < 0 || sx >= 5) continue;
              s += wv.at(co, ci, ky, kx) * xv.at(ci, sy, sx);
            }
        CHECK(y->value.at(co, oy, ox) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("conv2d gradients, zero and reflect padding") {
  Rng rng(5);
  for (auto mode : {PadMode::Zero, PadMode::Reflect}) {
    for (int stride : {1, 2}) {
      auto x0 = random_tensor({2, 6, 6}, rng);
      auto w0 = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
      auto b0 = random_tensor({3}, rng, -0.5, 0.5);
      auto res = grad_check(
          [&](const std::vector<Var>& ls) {
            return mean_all(square(conv2d(ls[0], ls[1], ls[2], stride, 1, mode)));
          },
          {make_leaf(x0), make_leaf(w0), make_leaf(b0)});
      CHECK(res.max_rel_err < 1e-5);
    }
  }
  // even kernel, PatchGAN-style
  auto x0 = random_tensor({3, 8, 8}, rng);
  auto w0 = random_tensor({2, 3, 4, 4}, rng, -0.5, 0.5);
  auto b0 = random_tensor({2}, rng);
  auto res = grad_check(
      [&](const std::vector<Var>& ls) {
        return mean_all(square(conv2d(ls[0], ls[1], ls[2], 2, 1, PadMode::Zero)));
      },
      {make_leaf(x0), make_leaf(w0), make_leaf(b0)});
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("instance_norm values and gradients") {
  Rng rng(13);
  auto x0 = random_tensor({3, 5, 5}, rng);
  auto g0 = random_tensor({3}, rng, 0.5, 1.5);
  auto be0 = random_tensor({3}, rng, -0.5, 0.5);

  auto y = instance_norm(make_const(x0), make_const(g0), make_const(be0));
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (int i = 0; i < 25; ++i) m += y->value[c * 25 + i];
    m /= 25;
    for (int i = 0; i < 25; ++i) {
      const double d = y->value[c * 25 + i] - m;
      v += d * d;
    }
    v /= 25;
    CHECK(m == doctest::Approx(be0[c]).epsilon(1e-9));
    CHECK(std::sqrt(v) == doctest::Approx(std::fabs(g0[c])).epsilon(1e-3));
  }

  auto res = grad_check(
      [](const std::vector<Var>& ls) {
        return mean_all(square(instance_norm(ls[0], ls[1], ls[2])));
      },
      {make_leaf(x0), make_leaf(g0), make_leaf(be0)});
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax_channels normalizes and differentiates") {
  Rng rng(17);
  auto x0 = random_tensor({5, 3, 3}, rng, -2, 2);
  auto p = softmax_channels(make_const(x0));
  for (int i = 0; i < 9; ++i) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += p->value[c * 9 + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  auto res = grad_check(
      [](const std::vector<Var>& ls) {
        return mean_all(square(softmax_channels(ls[0])));
      },
      {make_leaf(x0)});
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("nll_indexed cross entropy gradient") {
  Rng rng(19);
  auto x0 = random_tensor({4, 3, 3}, rng, -1, 1);
  Tensor labels({3, 3});
  for (int i = 0; i < 9; ++i) labels[i] = rng.uniform_int(4);
  auto res = grad_check(
      [&](const std::vector<Var>& ls) {
        return nll_indexed(softmax_channels(ls[0]), labels, 1e-7);
      },
      {make_leaf(x0)});
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("structure ops gradients") {
  Rng rng(23);
  auto a0 = random_tensor({2, 4, 4}, rng);
  auto b0 = random_tensor({3, 4, 4}, rng);

  auto res = grad_check(
      [](const std::vector<Var>& ls) {
        auto cat = concat_channels({ls[0], ls[1]});
        return mean_all(square(slice_channels(cat, 1, 3)));
      },
      {make_leaf(a0), make_leaf(b0)});
  CHECK(res.max_rel_err < kTol);

  res = grad_check(
      [](const std::vector<Var>& ls) { return mean_all(square(channel_mean(ls[0]))); },
      {make_leaf(b0)});
  CHECK(res.max_rel_err < kTol);

  res = grad_check(
      [](const std::vector<Var>& ls) { return mean_all(square(upsample_nearest(ls[0], 3))); },
      {make_leaf(a0)});
  CHECK(res.max_rel_err < kTol);

  auto c0 = random_tensor({2, 7, 5}, rng);
  res = grad_check(
      [](const std::vector<Var>& ls) { return mean_all(square(adaptive_avg_pool(ls[0], 3, 2))); },
      {make_leaf(c0)});
  CHECK(res.max_rel_err < kTol);

  res = grad_check(
      [](const std::vector<Var>& ls) {
        return mean_all(square(upsample_nearest_to(ls[0], 13, 11)));
      },
      {make_leaf(c0)});
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("depthwise_conv_fixed: value and gradient") {
  Rng rng(29);
  Tensor k({3, 3});
  double sum = 0;
  for (int i = 0; i < 9; ++i) {
    k[i] = rng.uniform(0, 1);
    sum += k[i];
  }
  for (int i = 0; i < 9; ++i) k[i] /= sum;

  // unit-sum kernel preserves constants under reflect padding
  auto c = make_const(Tensor::full({2, 6, 6}, 0.37));
  auto y = depthwise_conv_fixed(c, k);
  for (int64_t i = 0; i < y->value.numel(); ++i)
    CHECK(y->value[i] == doctest::Approx(0.37).epsilon(1e-12));

  auto x0 = random_tensor({2, 6, 6}, rng);
  auto res = grad_check(
      [&](const std::vector<Var>& ls) {
        return mean_all(square(depthwise_conv_fixed(ls[0], k)));
      },
      {make_leaf(x0)});
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("multi-consumer graphs accumulate gradients") {
  auto x = make_leaf(Tensor::full({1, 2, 2}, 0.5));
  auto y = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x -> d/dx = 2x + 3
  backward(mean_all(y));
  for (int i = 0; i < 4; ++i) CHECK(x->grad[i] == doctest::Approx((2 * 0.5 + 3) / 4.0));
}

TEST_CASE("detach blocks gradients; NoGradGuard records no tape") {
  auto x = make_leaf(Tensor::full({1, 2, 2}, 0.5));
  auto d = detach(scale(x, 2.0));
  backward(mean_all(mul(d, d)));
  CHECK_FALSE(x->has_grad());

  {
    NoGradGuard ng;
    auto y = scale(x, 2.0);
    CHECK_FALSE(y->requires_grad);
  }
  auto y2 = scale(x, 2.0);
  CHECK(y2->requires_grad);
}

TEST_CASE("backward on reused subgraph is correct") {
  Rng rng(31);
  auto x0 = random_tensor({2, 3, 3}, rng);
  auto res = grad_check(
      [](const std::vector<Var>& ls) {
        auto h = tanh_op(ls[0]);
        return add(mean_all(square(h)), mean_all(abs_op(h)));
      },
      {make_leaf(x0)});
  CHECK(res.max_rel_err < kTol);
}
