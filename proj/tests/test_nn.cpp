#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace ampn;
using ampn::testing::grad_check;
using ampn::testing::leaves_of;
using ampn::testing::random_tensor;
using ampn::testing::randomize;

namespace {

double hswish(double v) { return v * std::clamp(v + 3.0, 0.0, 6.0) / 6.0; }
double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void set_values(VarD v, std::initializer_list<double> values) {
  REQUIRE(static_cast<Eigen::Index>(values.size()) == v.value().size());
  Eigen::Index i = 0;
  for (double x : values) v.mutable_value().array()[i++] = x;
}

// Coordinate attention written out for a single-channel map with an 8-wide bottleneck.
TensorD attention_oracle(const TensorD& x, const CoordinateAttention<double>& ca) {
  const int h = x.h(), w = x.w(), hid = ca.hidden();
  const auto& rw = ca.reduce.weight.value();
  const auto& rb = ca.reduce.bias.value();
  auto gate = [&](const Conv2d<double>& g, double pooled) {
    double acc = g.bias.value()(0, 0, 0, 0);
    for (int j = 0; j < hid; ++j) acc += g.weight.value()(0, j, 0, 0) * hswish(rw(j, 0, 0, 0) * pooled + rb(0, j, 0, 0));
    return sigm(acc);
  };
  TensorD y(x.shape());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double row = 0, col = 0;
      for (int k = 0; k < w; ++k) row += x(0, 0, r, k) / w;
      for (int k = 0; k < h; ++k) col += x(0, 0, k, c) / h;
      y(0, 0, r, c) = x(0, 0, r, c) * gate(ca.gate_h, row) * gate(ca.gate_w, col);
    }
  return y;
}

CoordinateAttention<double> hand_attention(double shift) {
  Rng rng(0);
  CoordinateAttention<double> ca(1, 8, rng);
  set_values(ca.reduce.weight, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5, -2.0, 1.0});
  set_values(ca.reduce.bias, {0.1, 0.0, -0.2, 0.3, 0.0, 0.5, -0.1, 0.2});
  set_values(ca.gate_h.weight, {0.3, -0.2, 0.1, 0.4, -0.5, 0.2, 0.0, 0.6});
  set_values(ca.gate_h.bias, {shift});
  set_values(ca.gate_w.weight, {-0.1, 0.2, 0.3, -0.4, 0.5, -0.6, 0.7, 0.1});
  set_values(ca.gate_w.bias, {-shift});
  return ca;
}

double conv3x3_at(const TensorD& x, const Conv2d<double>& conv, int oc, int r, int c) {
  double acc = conv.bias.value()(0, oc, 0, 0);
  for (int ic = 0; ic < x.c(); ++ic)
    for (int u = -1; u <= 1; ++u)
      for (int v = -1; v <= 1; ++v) {
        const int yy = r + u, xx = c + v;
        if (yy >= 0 && yy < x.h() && xx >= 0 && xx < x.w())
          acc += conv.weight.value()(oc, ic, u + 1, v + 1) * x(0, ic, yy, xx);
      }
  return acc;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("coordinate attention matches the written-out formula") {
    const auto ca = hand_attention(0.4);
    TensorD x(Shape{1, 1, 2, 2});
    x.array() << 0.2, 0.9, -0.4, 0.6;
    const TensorD y = ca(VarD(x)).value();
    const TensorD ref = attention_oracle(x, ca);
    CHECK((y.array() - ref.array()).abs().maxCoeff() < 1e-12);
    // hand value for the first pixel: row mean 0.55, column mean -0.1
    CHECK(y(0, 0, 0, 0) == doctest::Approx(ref(0, 0, 0, 0)));
    CHECK(ca.hidden() == 8);
  }

  TEST_CASE("dual attention sums two independent branches") {
    DualAttention<double> dual;
    dual.input_attention = hand_attention(0.4);
    dual.output_attention = hand_attention(-1.1);
    const TensorD a = random_tensor<double>(Shape{1, 1, 3, 4}, 1, -1, 1);
    const TensorD b = random_tensor<double>(Shape{1, 1, 3, 4}, 2, -1, 1);
    const TensorD y = dual(VarD(a), VarD(b)).value();
    const TensorD ra = attention_oracle(a, dual.input_attention), rb = attention_oracle(b, dual.output_attention);
    CHECK((y.array() - ra.array() - rb.array()).abs().maxCoeff() < 1e-12);
    const TensorD zero(Shape{1, 1, 3, 4});
    const TensorD only_a = dual(VarD(a), VarD(zero)).value();
    CHECK((only_a.array() - ra.array()).abs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(dual(VarD(a), VarD(TensorD(Shape{1, 1, 3, 3}))), ShapeError);
  }

  TEST_CASE("attention output is bounded by its input") {
    Rng rng(5);
    CoordinateAttention<double> ca(6, 2, rng);
    randomize([&] { NamedParams<double> p; ca.parameters("ca", p); return p; }(), 3, 2.0);
    const TensorD x = random_tensor<double>(Shape{2, 6, 5, 7}, 4, -3, 3);
    const TensorD y = ca(VarD(x)).value();
    CHECK((y.array().abs() <= x.array().abs() + 1e-15).all());
  }

  TEST_CASE("fine-tune block matches direct convolution") {
    Rng rng(8);
    FineTuneBlock<double> block(2, rng);
    const TensorD x = random_tensor<double>(Shape{1, 2, 4, 5}, 6, -1, 1);
    TensorD hidden(x.shape());
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 5; ++k) {
          const double v = conv3x3_at(x, block.first, c, r, k);
          hidden(0, c, r, k) = v < 0 ? 0.2 * v : v;
        }
    const TensorD y = block(VarD(x)).value();
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 5; ++k) CHECK(y(0, c, r, k) == doctest::Approx(conv3x3_at(hidden, block.second, c, r, k)).epsilon(1e-12));
  }

  TEST_CASE("backbone shapes, size contract and determinism") {
    const ModelConfig cfg = ModelConfig::desk();
    const BackboneSpec spec = cfg.generator_backbone();
    Rng r1(3), r2(3);
    const Backbone<float> g1(spec, 3, 1, r1), same(spec, 3, 1, r2);
    Rng r3(4);
    const Backbone<float> g2(spec, 4, 3, r3);
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 1);
    const TensorF y = g1(VarF(x)).value();
    CHECK(y.shape() == Shape{1, 1, 64, 96});
    CHECK((y.array() == same(VarF(x)).value().array()).all());
    CHECK(g2(VarF(random_tensor(Shape{2, 4, 64, 96}, 2))).shape() == Shape{2, 3, 64, 96});
    CHECK_THROWS_AS(g1(VarF(random_tensor(Shape{1, 3, 60, 96}, 3))), ShapeError);
    CHECK_THROWS_AS(g1(VarF(random_tensor(Shape{1, 4, 64, 96}, 3))), ShapeError);
    CHECK(g1.parameter_count() > 0);
  }

  TEST_CASE("inverted residual shortcut rule") {
    Rng rng(1);
    CHECK(InvertedResidual<float>(8, 8, 1, 4, rng).has_shortcut());
    CHECK_FALSE(InvertedResidual<float>(8, 8, 2, 4, rng).has_shortcut());
    CHECK_FALSE(InvertedResidual<float>(8, 12, 1, 4, rng).has_shortcut());
  }
}

TEST_SUITE("gradients") {
  // Every block is checked on ten seeds with random weights and inputs, in double precision,
  // reducing the output with a fixed random projection.
  template <typename Module>
  void check_module(const Module& m, Shape in_shape, std::uint64_t seed) {
    NamedParams<double> params;
    m.parameters("m", params);
    randomize(params, seed);
    VarD x(random_tensor<double>(in_shape, seed + 100, -1, 1), true);
    Shape out = m(x).shape();
    const TensorD proj = random_tensor<double>(out, seed + 200, -1, 1);
    auto leaves = leaves_of(params);
    leaves.push_back(x);
    const auto r = grad_check([&] { return dot(m(x), proj); }, leaves, 1e-5, 1e-6);
    CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
    CHECK(r.checked > 0);
  }

  TEST_CASE("inverted residual") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      check_module(InvertedResidual<double>(4, 4, 1, 2, rng), Shape{1, 4, 6, 6}, seed);
      check_module(InvertedResidual<double>(3, 5, 2, 2, rng), Shape{1, 3, 6, 6}, seed);
    }
  }

  TEST_CASE("coordinate attention") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      check_module(CoordinateAttention<double>(3, 8, rng), Shape{2, 3, 5, 6}, seed);
    }
  }

  TEST_CASE("dual attention") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      DualAttention<double> d(3, 8, rng);
      NamedParams<double> params;
      d.parameters("d", params);
      randomize(params, seed);
      VarD a(random_tensor<double>(Shape{1, 3, 4, 5}, seed, -1, 1), true);
      VarD b(random_tensor<double>(Shape{1, 3, 4, 5}, seed + 50, -1, 1), true);
      const TensorD proj = random_tensor<double>(Shape{1, 3, 4, 5}, seed + 99, -1, 1);
      auto leaves = leaves_of(params);
      leaves.push_back(a);
      leaves.push_back(b);
      const auto r = grad_check([&] { return dot(d(a, b), proj); }, leaves, 1e-5, 1e-6);
      CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
    }
  }

  TEST_CASE("fine-tune block") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      check_module(FineTuneBlock<double>(3, rng), Shape{1, 3, 5, 5}, seed);
    }
  }
}
