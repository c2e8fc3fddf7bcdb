#include "ampn/pyramid.hpp"

#include <cmath>

namespace ampn {

const std::vector<double>& burt_adelson_kernel() {
  static const std::vector<double> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  return k;
}

template <typename Scalar>
Tensor<Scalar> pyramid_reduce(const Tensor<Scalar>& x) {
  const auto& k = burt_adelson_kernel();
  return apply_separable(x, LinearMap1D::reduce(x.h(), k), LinearMap1D::reduce(x.w(), k));
}

template <typename Scalar>
Tensor<Scalar> pyramid_expand(const Tensor<Scalar>& x) {
  const auto& k = burt_adelson_kernel();
  return apply_separable(x, LinearMap1D::expand(x.h(), k), LinearMap1D::expand(x.w(), k));
}

template <typename Scalar>
Var<Scalar> pyramid_expand(const Var<Scalar>& x) {
  const auto& k = burt_adelson_kernel();
  return resample(x, LinearMap1D::expand(x.shape().h, k), LinearMap1D::expand(x.shape().w, k));
}

template <typename Scalar>
PyramidDecomposition<Scalar> decompose(const Tensor<Scalar>& x, int levels) {
  if (levels < 1) throw ShapeError("decompose: levels must be >= 1");
  const int f = 1 << levels;
  if (x.h() % f != 0 || x.w() % f != 0) {
    throw ShapeError("decompose: " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                     " is not divisible by 2^" + std::to_string(levels));
  }
  PyramidDecomposition<Scalar> pyr;
  Tensor<Scalar> current = x;
  for (int k = 0; k < levels; ++k) {
    Tensor<Scalar> down = pyramid_reduce(current);
    Tensor<Scalar> up = pyramid_expand(down);
    Tensor<Scalar> band(current.shape());
    band.array() = current.array() - up.array();
    pyr.highfreq.push_back(std::move(band));
    current = std::move(down);
  }
  pyr.residual = std::move(current);
  return pyr;
}

template <typename Scalar>
Tensor<Scalar> reconstruct(const PyramidDecomposition<Scalar>& pyr) {
  Tensor<Scalar> current = pyr.residual;
  for (int k = pyr.levels() - 1; k >= 0; --k) {
    const Tensor<Scalar>& band = pyr.highfreq[k];
    if (band.h() != 2 * current.h() || band.w() != 2 * current.w() || band.c() != current.c() ||
        band.n() != current.n()) {
      throw ShapeError("reconstruct: level " + std::to_string(k) + " shape " + band.shape().str() +
                       " inconsistent with coarser level " + current.shape().str());
    }
    Tensor<Scalar> up = pyramid_expand(current);
    up.array() += band.array();
    current = std::move(up);
  }
  return current;
}

PyramidDecomposition<float> decompose(const ImageTensor& image, int levels) {
  return decompose(image.tensor(), levels);
}

ImageTensor reconstruct_image(const PyramidDecomposition<float>& pyr) {
  return ImageTensor::clamped(reconstruct(pyr));
}

double highfreq_energy(const TensorF& image, const TensorF& region) {
  TensorF h0 = decompose(image, 1).highfreq[0];
  double total = 0.0;
  double count = 0.0;
  for (int n = 0; n < h0.n(); ++n)
    for (int c = 0; c < h0.c(); ++c)
      for (int y = 0; y < h0.h(); ++y)
        for (int x = 0; x < h0.w(); ++x) {
          if (!region.empty() && region(n, 0, y, x) == 0.0f) continue;
          total += std::abs(h0(n, c, y, x));
          count += 1.0;
        }
  return count > 0 ? total / count : 0.0;
}

template Tensor<float> pyramid_reduce(const Tensor<float>&);
template Tensor<double> pyramid_reduce(const Tensor<double>&);
template Tensor<float> pyramid_expand(const Tensor<float>&);
template Tensor<double> pyramid_expand(const Tensor<double>&);
template Var<float> pyramid_expand(const Var<float>&);
template Var<double> pyramid_expand(const Var<double>&);
template PyramidDecomposition<float> decompose(const Tensor<float>&, int);
template PyramidDecomposition<double> decompose(const Tensor<double>&, int);
template Tensor<float> reconstruct(const PyramidDecomposition<float>&);
template Tensor<double> reconstruct(const PyramidDecomposition<double>&);

}  // namespace ampn
