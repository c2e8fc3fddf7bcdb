#include "support.hpp"

#include "ampn/pyramid.hpp"

#include <doctest.h>

#include <array>

using namespace ampn;
using ampn::testing::max_abs_diff;
using ampn::testing::random_tensor;

namespace {

// Straight-line reference for one pyramid level on a single-channel 4x4 image:
// 5-tap [1 4 6 4 1]/16 blur with mirror borders, even-sample decimation, and
// zero insertion followed by the same blur at gain 4.
using Grid = std::vector<std::vector<double>>;

int mirror(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

Grid blur(const Grid& g, double gain) {
  const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  const int h = static_cast<int>(g.size()), w = static_cast<int>(g[0].size());
  Grid rows(h, std::vector<double>(w)), out(h, std::vector<double>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int t = -2; t <= 2; ++t) rows[y][x] += k[t + 2] * g[y][mirror(x + t, w)];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int t = -2; t <= 2; ++t) out[y][x] += gain * k[t + 2] * rows[mirror(y + t, h)][x];
  return out;
}

Grid down(const Grid& g) {
  Grid b = blur(g, 1.0), out(g.size() / 2, std::vector<double>(g[0].size() / 2));
  for (size_t y = 0; y < out.size(); ++y)
    for (size_t x = 0; x < out[0].size(); ++x) out[y][x] = b[2 * y][2 * x];
  return out;
}

Grid up(const Grid& g) {
  Grid z(g.size() * 2, std::vector<double>(g[0].size() * 2, 0.0));
  for (size_t y = 0; y < g.size(); ++y)
    for (size_t x = 0; x < g[0].size(); ++x) z[2 * y][2 * x] = g[y][x];
  return blur(z, 4.0);
}

TensorF to_tensor(const Grid& g) {
  TensorF t(Shape{1, 1, static_cast<int>(g.size()), static_cast<int>(g[0].size())});
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) t(0, 0, y, x) = static_cast<float>(g[y][x]);
  return t;
}

Grid ramp() { return Grid(4, std::vector<double>{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}); }

}  // namespace

TEST_SUITE("pyramid") {
  TEST_CASE("ramp level matches the reference") {
    const Grid x = ramp();
    const Grid residual = down(x);
    const Grid upsampled = up(residual);
    Grid h0 = x;
    for (int y = 0; y < 4; ++y)
      for (int c = 0; c < 4; ++c) h0[y][c] -= upsampled[y][c];

    const auto pyr = decompose(to_tensor(x), 1);
    REQUIRE(pyr.levels() == 1);
    CHECK(pyr.highfreq[0].shape() == Shape{1, 1, 4, 4});
    CHECK(pyr.residual.shape() == Shape{1, 1, 2, 2});
    CHECK(max_abs_diff(pyr.residual, to_tensor(residual)) < 1e-6);
    CHECK(max_abs_diff(pyr.highfreq[0], to_tensor(h0)) < 1e-6);
    CHECK(max_abs_diff(reconstruct(pyr), to_tensor(x)) < 1e-6);
  }

  TEST_CASE("constant images have empty bands") {
    for (int levels : {1, 2, 3}) {
      const TensorF c(Shape{1, 3, 32, 48}, 0.37f);
      const auto pyr = decompose(c, levels);
      for (const auto& h : pyr.highfreq) CHECK(h.array().abs().maxCoeff() == 0.0f);
      CHECK((pyr.residual.array() - 0.37f).abs().maxCoeff() < 1e-6f);
    }
  }

  TEST_CASE("reduce then expand leaves a constant unchanged") {
    const TensorF c(Shape{1, 1, 16, 16}, 0.8f);
    const TensorF once = pyramid_expand(pyramid_reduce(c));
    const TensorF twice = pyramid_expand(pyramid_reduce(once));
    CHECK(max_abs_diff(once, c) < 1e-6);
    CHECK(max_abs_diff(twice, once) < 1e-6);
  }

  TEST_CASE("shape contract and errors") {
    CHECK_THROWS_AS(decompose(TensorF(Shape{1, 3, 8, 8}), 0), ShapeError);
    CHECK_THROWS_AS(decompose(TensorF(Shape{1, 3, 12, 8}), 3), ShapeError);
    const auto pyr = decompose(random_tensor(Shape{1, 3, 64, 96}, 1), 3);
    CHECK(pyr.highfreq[0].shape() == Shape{1, 3, 64, 96});
    CHECK(pyr.highfreq[1].shape() == Shape{1, 3, 32, 48});
    CHECK(pyr.highfreq[2].shape() == Shape{1, 3, 16, 24});
    CHECK(pyr.residual.shape() == Shape{1, 3, 8, 12});
    auto broken = pyr;
    broken.highfreq[1] = TensorF(Shape{1, 3, 30, 48});
    CHECK_THROWS_AS(reconstruct(broken), ShapeError);
  }

  TEST_CASE("reconstruction is exact up to rounding") {
    for (int levels : {1, 2, 3}) {
      const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 10 + levels);
      CHECK(max_abs_diff(reconstruct(decompose(x, levels)), x) <= 1e-5);
    }
  }

  TEST_CASE("zeroed bands give the low-pass image") {
    const TensorF x = random_tensor(Shape{1, 3, 32, 32}, 4);
    auto pyr = decompose(x, 2);
    for (auto& h : pyr.highfreq) h.set_zero();
    const TensorF expected = pyramid_expand(pyramid_expand(pyr.residual));
    CHECK(max_abs_diff(reconstruct(pyr), expected) < 1e-7);
  }

  TEST_CASE("decomposition is linear") {
    const TensorF a = random_tensor(Shape{1, 3, 32, 64}, 5);
    const TensorF b = random_tensor(Shape{1, 3, 32, 64}, 6);
    TensorF mix(a.shape());
    mix.array() = 0.3f * a.array() - 1.7f * b.array();
    const auto pa = decompose(a, 2), pb = decompose(b, 2), pm = decompose(mix, 2);
    for (int k = 0; k < 2; ++k) {
      TensorF combo(pa.highfreq[k].shape());
      combo.array() = 0.3f * pa.highfreq[k].array() - 1.7f * pb.highfreq[k].array();
      CHECK(max_abs_diff(pm.highfreq[k], combo) <= 1e-5);
    }
    TensorF res(pa.residual.shape());
    res.array() = 0.3f * pa.residual.array() - 1.7f * pb.residual.array();
    CHECK(max_abs_diff(pm.residual, res) <= 1e-5);
  }

  TEST_CASE("high-frequency energy drops after blurring") {
    const TensorF x = random_tensor(Shape{1, 3, 32, 32}, 8);
    const TensorF smooth = pyramid_expand(pyramid_reduce(x));
    CHECK(highfreq_energy(smooth) < highfreq_energy(x));
    CHECK(highfreq_energy(TensorF(Shape{1, 3, 32, 32}, 0.5f)) == 0.0);
  }
}
