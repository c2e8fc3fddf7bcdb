#pragma once

#include "ampn/image.hpp"
#include "ampn/ops.hpp"

#include <vector>

namespace ampn {

/// Separable Burt-Adelson 5-tap kernel [1, 4, 6, 4, 1] / 16.
const std::vector<double>& burt_adelson_kernel();

/// Low-frequency residual plus high-frequency bands, finest first:
/// highfreq[k] lives at 1/2^k resolution, residual at 1/2^L.
template <typename Scalar>
struct PyramidDecomposition {
  Tensor<Scalar> residual;
  std::vector<Tensor<Scalar>> highfreq;

  int levels() const { return static_cast<int>(highfreq.size()); }
};

/// Blur (mirror borders) and keep every second sample along both axes.
template <typename Scalar> Tensor<Scalar> pyramid_reduce(const Tensor<Scalar>& x);
/// Zero-insertion upsampling by 2 followed by the blur at 4x total gain.
template <typename Scalar> Tensor<Scalar> pyramid_expand(const Tensor<Scalar>& x);
/// Differentiable pyramid_expand.
template <typename Scalar> Var<Scalar> pyramid_expand(const Var<Scalar>& x);

/// Splits `x` into `levels` high-frequency bands and a residual.
/// Throws ShapeError unless H and W are divisible by 2^levels and levels >= 1.
template <typename Scalar>
PyramidDecomposition<Scalar> decompose(const Tensor<Scalar>& x, int levels);

/// Inverse of decompose (no clamping).
template <typename Scalar>
Tensor<Scalar> reconstruct(const PyramidDecomposition<Scalar>& pyr);

PyramidDecomposition<float> decompose(const ImageTensor& image, int levels);
/// Reconstructs and clamps to [0,1].
ImageTensor reconstruct_image(const PyramidDecomposition<float>& pyr);

/// Mean |h_0| over pixels where `region` (a [N,1,H,W] weight map, or empty for all) is nonzero.
double highfreq_energy(const TensorF& image, const TensorF& region = {});

}  // namespace ampn
