#include "support.hpp"

#include <doctest.h>

using namespace ampn;
using ampn::testing::random_tensor;

namespace {

// Direct six-loop convolution with zero padding and channel groups.
TensorD naive_conv(const TensorD& x, const TensorD& w, const TensorD& b, Conv2dOptions o) {
  const int k = w.h(), out_c = w.n(), in_per = w.c();
  const int oh = (x.h() + 2 * o.padding - k) / o.stride + 1;
  const int ow = (x.w() + 2 * o.padding - k) / o.stride + 1;
  const int out_per = out_c / o.groups;
  TensorD y(Shape{x.n(), out_c, oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int oc = 0; oc < out_c; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b(0, oc, 0, 0);
          const int g = oc / out_per;
          for (int ic = 0; ic < in_per; ++ic)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * o.stride + u - o.padding, xx = j * o.stride + v - o.padding;
                if (yy < 0 || yy >= x.h() || xx < 0 || xx >= x.w()) continue;
                acc += w(oc, ic, u, v) * x(n, g * in_per + ic, yy, xx);
              }
          y(n, oc, i, j) = acc;
        }
  return y;
}

double max_diff(const TensorD& a, const TensorD& b) { return (a.array() - b.array()).abs().maxCoeff(); }

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d agrees with direct loops") {
    struct Case { int in, out, k; Conv2dOptions o; };
    const Case cases[] = {{3, 5, 3, {1, 1, 1}}, {4, 6, 1, {1, 0, 1}}, {6, 6, 3, {2, 1, 6}},
                          {5, 2, 3, {2, 0, 1}}, {8, 8, 3, {1, 1, 8}}};
    std::uint64_t seed = 0;
    for (const auto& c : cases) {
      const TensorD x = random_tensor<double>(Shape{2, c.in, 7, 9}, ++seed, -1, 1);
      const int in_per = c.o.groups > 1 ? 1 : c.in;
      const TensorD w = random_tensor<double>(Shape{c.out, in_per, c.k, c.k}, ++seed, -1, 1);
      const TensorD b = random_tensor<double>(Shape{1, c.out, 1, 1}, ++seed, -1, 1);
      const VarD y = conv2d(VarD(x), VarD(w), VarD(b), c.o);
      const TensorD ref = naive_conv(x, w, b, c.o);
      REQUIRE(y.shape() == ref.shape());
      CHECK(max_diff(y.value(), ref) < 1e-12);
    }
  }

  TEST_CASE("broadcasting arithmetic") {
    const VarD a(TensorD(Shape{2, 3, 2, 2}, 2.0));
    const VarD row(random_tensor<double>(Shape{1, 3, 1, 2}, 3));
    const VarD y = mul(a, row);
    CHECK(y.shape() == Shape{2, 3, 2, 2});
    CHECK(y.value()(1, 2, 1, 1) == doctest::Approx(2.0 * row.value()(0, 2, 0, 1)));
    CHECK_THROWS_AS(add(a, VarD(TensorD(Shape{1, 2, 1, 1}))), ShapeError);
  }

  TEST_CASE("pooling profiles") {
    TensorD x(Shape{1, 1, 2, 3});
    x.array() << 1, 2, 3, 4, 5, 6;
    const VarD v(x);
    const TensorD mw = mean_over_width(v).value(), mh = mean_over_height(v).value();
    CHECK(mw.shape() == Shape{1, 1, 2, 1});
    CHECK(mw(0, 0, 0, 0) == doctest::Approx(2.0));
    CHECK(mw(0, 0, 1, 0) == doctest::Approx(5.0));
    CHECK(mh.shape() == Shape{1, 1, 1, 3});
    CHECK(mh(0, 0, 0, 2) == doctest::Approx(4.5));
  }

  TEST_CASE("activation values") {
    TensorD x(Shape{1, 1, 1, 5});
    x.array() << -4, -1, 0, 2, 7;
    const VarD v(x);
    const auto hs = hardswish(v).value().array();
    CHECK(hs[0] == 0.0);
    CHECK(hs[1] == doctest::Approx(-1.0 * 2.0 / 6.0));
    CHECK(hs[3] == doctest::Approx(2.0 * 5.0 / 6.0));
    CHECK(hs[4] == 7.0);
    const auto r6 = relu6(v).value().array();
    CHECK(r6[0] == 0.0);
    CHECK(r6[4] == 6.0);
    const auto lr = leaky_relu(v, 0.2).value().array();
    CHECK(lr[0] == doctest::Approx(-0.8));
    CHECK(sigmoid(v).value().array()[2] == 0.5);
    CHECK(kink_points("relu6") == std::vector<double>{0.0, 6.0});
    CHECK(kink_points("sigmoid").empty());
  }

  TEST_CASE("bilinear resize keeps constants and corners") {
    const VarD c(TensorD(Shape{1, 2, 5, 7}, 0.3));
    CHECK((resize_bilinear(c, 11, 3).value().array() - 0.3).abs().maxCoeff() < 1e-12);
    const TensorD x = random_tensor<double>(Shape{1, 1, 4, 4}, 9);
    CHECK(max_diff(resize_bilinear(VarD(x), 4, 4).value(), x) < 1e-12);
  }

  TEST_CASE("channel normalisation gives unit vectors") {
    const VarD x(random_tensor<double>(Shape{1, 4, 3, 3}, 2, -1, 1));
    const TensorD y = channel_normalize(x, 1e-10).value();
    for (int i = 0; i < 3; ++i) {
      double n2 = 0;
      for (int c = 0; c < 4; ++c) n2 += y(0, c, i, i) * y(0, c, i, i);
      CHECK(n2 == doctest::Approx(1.0));
    }
  }

  TEST_CASE("gradients of the elementary ops") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      VarD a(random_tensor<double>(Shape{1, 2, 4, 5}, seed, -2, 2), true);
      VarD m(random_tensor<double>(Shape{1, 1, 4, 5}, seed + 10), true);
      VarD b(random_tensor<double>(Shape{1, 2, 4, 5}, seed + 20, -2, 2), true);
      const TensorD proj = random_tensor<double>(Shape{1, 2, 4, 5}, seed + 30, -1, 1);
      auto f = [&] {
        VarD y = add(hardswish(a), mul(sigmoid(b), a));
        y = convex_blend(m, y, relu6(b));
        y = channel_normalize(resize_bilinear(y, 7, 3), 1e-10);
        return add(dot(resize_bilinear(y, 4, 5), proj), mean(square(abs(b))));
      };
      const auto r = ampn::testing::grad_check(f, {a, m, b}, 1e-5, 1e-6);
      CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
      CHECK(r.checked > 50);
    }
  }
}
