// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor container, RNG, bicubic resizing, block rearrangement, and the
// autodiff substrate (per-op finite-difference gradient checks, Adam).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "acnf/autodiff.hpp"
#include "acnf/resize.hpp"
#include "acnf/tensor.hpp"
#include "testsupport.hpp"

using namespace acnf;
using testsupport::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t(2, 3, 4, 5);
  CHECK(t.v.size() == 2u * 3 * 4 * 5);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t.v.back() == 7.0f);
  CHECK(t.shape_str() == "(2,3,4,5)");
  CHECK(Tensor::zeros_like(t).v[0] == 0.0f);
  CHECK(t.same_shape(Tensor(2, 3, 4, 5)));
  CHECK(!t.same_shape(Tensor(2, 3, 4, 6)));
  CHECK_THROWS_AS(Tensor(-1, 1, 1, 1), ValueError);
  CHECK(Tensor(0, 1, 1, 1).empty());
}

TEST_CASE("quantize_unit maps to the 8-bit grid and clamps") {
  Tensor t(1, 1, 1, 4);
  t.v = {-0.5f, 0.0f, 0.5f, 1.7f};
  Tensor q = quantize_unit(t);
  CHECK(q.v[0] == 0.0f);
  CHECK(q.v[1] == 0.0f);
  CHECK(q.v[2] == doctest::Approx(128.0f / 255.0f).epsilon(1e-9));
  CHECK(q.v[3] == 1.0f);
  // Every quantized value sits exactly on k/255.
  Rng rng(7);
  Tensor r = random_tensor(rng, 1, 8, 8, 3, -0.2, 1.2);
  for (float v : quantize_unit(r).v) {
    double k = std::round(static_cast<double>(v) * 255.0);
    CHECK(v == static_cast<float>(k / 255.0));
  }
}

TEST_CASE("8-bit byte conversion roundtrip") {
  Rng rng(3);
  Tensor t = quantize_unit(random_tensor(rng, 1, 5, 7, 3));
  std::vector<uint8_t> bytes = to_bytes_8bit(t);
  CHECK(bytes.size() == t.v.size());
  Tensor back = from_bytes_8bit(bytes, t.h, t.w, t.c);
  for (size_t i = 0; i < t.v.size(); ++i) CHECK(back.v[i] == t.v[i]);
}

TEST_CASE("rng determinism and serialization") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.u64() == b.u64());
  for (int i = 0; i < 100; ++i) {
    double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
  std::string s = a.serialize();
  double next_a = a.uniform();
  Rng c(0);
  c.deserialize(s);
  CHECK(c.uniform() == next_a);

  // below() stays in range; shuffle is a permutation.
  for (int i = 0; i < 200; ++i) CHECK(a.below(17) < 17u);
  std::vector<int> xs{0, 1, 2, 3, 4, 5, 6, 7};
  a.shuffle(xs.begin(), xs.end());
  std::vector<int> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("scaled_len pinned cases") {
  CHECK(scaled_len(128, 0.5) == 64);
  CHECK(scaled_len(128, 0.75) == 96);
  CHECK(scaled_len(128, 1.0) == 128);
  CHECK(scaled_len(127, 0.5) == 64);   // lround(63.5) rounds half away from zero
  CHECK(scaled_len(3, 0.5) == 2);      // lround(1.5)
  CHECK(scaled_len(1, 0.5) == 1);      // floor of 1
  CHECK(scaled_len(2, 0.25) == 1);
}

TEST_CASE("bicubic resize matches the brute-force oracle") {
  Rng rng(11);
  for (auto [h, w, oh, ow] : {std::array<int, 4>{16, 16, 8, 8},
                              std::array<int, 4>{17, 13, 12, 10},
                              std::array<int, 4>{8, 8, 16, 16},
                              std::array<int, 4>{12, 20, 9, 15},
                              std::array<int, 4>{16, 16, 12, 12}}) {
    Tensor x = random_tensor(rng, 1, h, w, 2);
    Tensor got = resize_bicubic_to(x, oh, ow);
    Tensor want = testsupport::oracle_bicubic(x, oh, ow);
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < got.v.size(); ++i)
      CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-4));
  }
}

TEST_CASE("bicubic identity and clamping") {
  Rng rng(5);
  Tensor x = random_tensor(rng, 1, 9, 11, 1);
  Tensor same = resize_bicubic_to(x, 9, 11);
  for (size_t i = 0; i < x.v.size(); ++i)
    CHECK(same.v[i] == doctest::Approx(x.v[i]).epsilon(1e-6));

  // Upsampling overshoots near edges; the public API clamps, the internal
  // op does not (training needs the unclamped values).
  Tensor step(1, 1, 8, 1);
  step.v = {0, 0, 0, 0, 1, 1, 1, 1};
  Tensor up = bicubic_resize(step, 2.0);
  for (float v : up.v) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  Tensor raw = resize_bicubic_to(step, 1, 16);
  bool overshoot = false;
  for (float v : raw.v) overshoot |= (v < 0.0f || v > 1.0f);
  CHECK(overshoot);
}

TEST_CASE("space_to_depth known example and exact inverse") {
  Tensor x(1, 2, 2, 1);
  x.v = {1, 2, 3, 4};
  Tensor d = space_to_depth(x, 2);
  CHECK(d.h == 1);
  CHECK(d.w == 1);
  CHECK(d.c == 4);
  CHECK(d.v == std::vector<float>{1, 2, 3, 4});
  Tensor back = depth_to_space(d, 2);
  CHECK(back.v == x.v);

  Rng rng(19);
  for (int it = 0; it < 50; ++it) {
    int block = 1 + static_cast<int>(rng.below(4));
    int h = block * (1 + static_cast<int>(rng.below(5)));
    int w = block * (1 + static_cast<int>(rng.below(5)));
    int c = 1 + static_cast<int>(rng.below(3));
    Tensor t = random_tensor(rng, 1, h, w, c);
    Tensor rt = depth_to_space(space_to_depth(t, block), block);
    REQUIRE(rt.same_shape(t));
    CHECK(rt.v == t.v);
  }
  CHECK_THROWS_AS(space_to_depth(Tensor(1, 3, 4, 1), 2), ValueError);
}

// ---------------------------------------------------------------------------
// Per-op gradient checks in double precision.
// ---------------------------------------------------------------------------

namespace {

using D = double;

// Wraps a tensor as a checkable parameter and gradchecks `build` (a scalar
// graph over that parameter) at every coordinate.
testsupport::GradcheckStats gradcheck_op(
    TensorT<D> init, const std::function<VarT<D>(VarT<D>)>& build) {
  ParamT<D> p{"x", init, TensorT<D>::zeros_like(init), true};
  auto loss = [&] { return build(param_var(p))->value.v[0]; };
  p.zero_grad();
  backward(build(param_var(p)));
  testsupport::GradcheckStats st;
  for (size_t i = 0; i < p.value.v.size(); ++i) {
    double fd = testsupport::fd_derivative(loss, &p.value.v[i]);
    testsupport::check_coord(st, p.grad.v[i], fd);
  }
  return st;
}

void expect_clean(const testsupport::GradcheckStats& st) {
  CHECK(st.checked > 0);
  CHECK(st.failed == 0);
}

}  // namespace

TEST_CASE("gradcheck elementwise and reduction ops") {
  Rng rng(101);
  TensorT<D> x = random_tensor<D>(rng, 1, 4, 5, 3, -1.0, 1.0);
  TensorT<D> t = random_tensor<D>(rng, 1, 4, 5, 3, -1.0, 1.0);

  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(relu(v)); }));
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(softplus(v)); }));
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(mul_scalar(v, -2.5)); }));
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mse_loss(v, constant(t)); }));
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(add(v, constant(t))); }));
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(add(v, v)); }));  // fan-out
  expect_clean(gradcheck_op(x, [&](VarT<D> v) { return mean_all(global_avg_pool(v)); }));

  // softplus large-input passthrough stays differentiable.
  TensorT<D> big(1, 1, 1, 4);
  big.v = {31.0, 40.0, -35.0, 0.0};
  expect_clean(gradcheck_op(big, [&](VarT<D> v) { return mean_all(softplus(v)); }));
}

TEST_CASE("gradcheck structural ops") {
  Rng rng(102);
  TensorT<D> x = random_tensor<D>(rng, 1, 8, 8, 2, -1.0, 1.0);
  expect_clean(gradcheck_op(x, [&](VarT<D> v) {
    return mean_all(mul_scalar(space_to_depth_op(v, 2), 1.7));
  }));
  TensorT<D> d = random_tensor<D>(rng, 1, 2, 2, 8, -1.0, 1.0);
  expect_clean(gradcheck_op(d, [&](VarT<D> v) {
    return mean_all(mul_scalar(depth_to_space_op(v, 2), 0.6));
  }));
  TensorT<D> r = random_tensor<D>(rng, 1, 10, 12, 2, -1.0, 1.0);
  TensorT<D> tgt_dn = random_tensor<D>(rng, 1, 5, 6, 2, -1.0, 1.0);
  expect_clean(gradcheck_op(r, [&](VarT<D> v) {
    return mse_loss(resize_bicubic_op(v, 5, 6), constant(tgt_dn));
  }));
  TensorT<D> tgt_up = random_tensor<D>(rng, 1, 15, 18, 2, -1.0, 1.0);
  expect_clean(gradcheck_op(r, [&](VarT<D> v) {
    return mse_loss(resize_bicubic_op(v, 15, 18), constant(tgt_up));
  }));
}

TEST_CASE("gradcheck conv2d for activations, weights and bias") {
  Rng rng(103);
  for (int k : {1, 3}) {
    TensorT<D> xv = random_tensor<D>(rng, 2, 5, 6, 3, -1.0, 1.0);
    TensorT<D> wv = random_tensor<D>(rng, k, k, 3, 4, -0.5, 0.5);
    TensorT<D> bv = random_tensor<D>(rng, 1, 1, 1, 4, -0.5, 0.5);
    TensorT<D> tv = random_tensor<D>(rng, 2, 5, 6, 4, -1.0, 1.0);
    ParamT<D> xp{"x", xv, TensorT<D>::zeros_like(xv), true};
    ParamT<D> wp{"w", wv, TensorT<D>::zeros_like(wv), true};
    ParamT<D> bp{"b", bv, TensorT<D>::zeros_like(bv), true};
    auto build = [&] {
      return mse_loss(conv2d(param_var(xp), param_var(wp), param_var(bp)), constant(tv));
    };
    xp.zero_grad();
    wp.zero_grad();
    bp.zero_grad();
    backward(build());
    auto loss = [&] { return build()->value.v[0]; };
    testsupport::GradcheckStats st;
    for (auto* p : {&xp, &wp, &bp})
      for (size_t i = 0; i < p->value.v.size(); ++i)
        testsupport::check_coord(st, p->grad.v[i],
                                 testsupport::fd_derivative(loss, &p->value.v[i]));
    INFO("k=" << k << " worst_rel=" << st.worst_rel);
    CHECK(st.failed == 0);
  }
}

TEST_CASE("trainable=false blocks gradient flow") {
  Rng rng(104);
  TensorT<D> xv = random_tensor<D>(rng, 1, 4, 4, 2, -1.0, 1.0);
  ParamT<D> frozen{"w", xv, TensorT<D>::zeros_like(xv), false};
  ParamT<D> live{"v", xv, TensorT<D>::zeros_like(xv), true};
  auto root = mean_all(add(param_var(frozen), param_var(live)));
  backward(root);
  for (double g : frozen.grad.v) CHECK(g == 0.0);
  bool any = false;
  for (double g : live.grad.v) any |= (g != 0.0);
  CHECK(any);
}

TEST_CASE("NoGradScope suppresses the tape") {
  Rng rng(105);
  TensorT<D> xv = random_tensor<D>(rng, 1, 4, 4, 2, -1.0, 1.0);
  ParamT<D> p{"w", xv, TensorT<D>::zeros_like(xv), true};
  p.zero_grad();
  {
    NoGradScope ng;
    auto out = mean_all(relu(param_var(p)));
    CHECK(out->inputs.empty());
    CHECK(!out->needs_grad);
  }
  for (double g : p.grad.v) CHECK(g == 0.0);
}

TEST_CASE("backward requires a scalar root and accumulates across calls") {
  Rng rng(106);
  TensorT<D> xv = random_tensor<D>(rng, 1, 2, 2, 1, -1.0, 1.0);
  ParamT<D> p{"w", xv, TensorT<D>::zeros_like(xv), true};
  CHECK_THROWS_AS(backward(param_var(p)), ValueError);
  p.zero_grad();
  backward(mean_all(param_var(p)));
  TensorT<D> once = p.grad;
  backward(mean_all(param_var(p)));
  for (size_t i = 0; i < once.v.size(); ++i)
    CHECK(p.grad.v[i] == doctest::Approx(2.0 * once.v[i]).epsilon(1e-12));
}

TEST_CASE("adam matches a hand-stepped reference") {
  // One scalar parameter, constant gradient 1: m_t, v_t and the update have
  // closed forms; verify two steps.
  ParamT<D> p{"w", TensorT<D>(1, 1, 1, 1), TensorT<D>(1, 1, 1, 1), true};
  p.value.v[0] = 0.5;
  const double lr = 0.1, b1 = 0.9, b2 = 0.99, eps = 1e-8;
  AdamT<D> opt(lr, b1, b2, eps);
  double w = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p.grad.v[0] = 1.0;
    opt.step({&p});
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.value.v[0] == doctest::Approx(w).epsilon(1e-12));
  }
  // Frozen params are skipped.
  p.trainable = false;
  double before = p.value.v[0];
  p.grad.v[0] = 5.0;
  opt.step({&p});
  CHECK(p.value.v[0] == before);
}
