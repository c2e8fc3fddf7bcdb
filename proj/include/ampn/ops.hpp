#pragma once

#include "ampn/autograd.hpp"

#include <vector>

namespace ampn {

/// Sparse 1-D linear operator `out[j] = sum_k weight[k] * in[index[k]]`
/// for k in [offset[j], offset[j+1]). Resampling and filtering along one axis
/// are all expressed this way so their adjoints come for free.
struct LinearMap1D {
  int in_size = 0;
  int out_size = 0;
  std::vector<int> offset;  // out_size + 1 entries
  std::vector<int> index;
  std::vector<double> weight;

  static LinearMap1D identity(int n);
  /// Half-pixel-centre bilinear resampling (no corner alignment), clamped at the edges.
  static LinearMap1D bilinear(int in_size, int out_size);
  /// Nearest-neighbour upsampling by an integer factor.
  static LinearMap1D nearest_up(int in_size, int factor);
  /// Mean over consecutive blocks of `factor` samples.
  static LinearMap1D box_down(int in_size, int factor);
  /// 'same' correlation with `kernel` (odd length) and mirror borders (edge not repeated).
  static LinearMap1D filter_reflect(int size, const std::vector<double>& kernel);
  /// 'valid' correlation with `kernel`.
  static LinearMap1D filter_valid(int size, const std::vector<double>& kernel);
  /// Blur with `kernel` under mirror borders, then keep even samples.
  static LinearMap1D reduce(int in_size, const std::vector<double>& kernel);
  /// Zero-insertion to 2x size, then blur with `kernel` scaled by 2.
  static LinearMap1D expand(int in_size, const std::vector<double>& kernel);
};

/// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n);

/// Applies `along_w` to every row and `along_h` to every column (non-differentiable).
template <typename Scalar>
Tensor<Scalar> apply_separable(const Tensor<Scalar>& x, const LinearMap1D& along_h,
                               const LinearMap1D& along_w);
/// Adjoint of apply_separable: maps an output-shaped tensor back to input shape.
template <typename Scalar>
Tensor<Scalar> apply_separable_adjoint(const Tensor<Scalar>& g, const LinearMap1D& along_h,
                                       const LinearMap1D& along_w);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Elementwise arithmetic with numpy-style broadcasting over size-1 dims.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b);

/// scale * x + shift
template <typename Scalar> Var<Scalar> affine(const Var<Scalar>& x, Scalar scale, Scalar shift);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> abs(const Var<Scalar>& x);

template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> relu6(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> hardswish(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);
template <typename Scalar> Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi);

/// Cross-correlation. weight: [out, in/groups, k, k]; bias: [1, out, 1, 1] or undefined.
/// Supports groups == 1 and depthwise (groups == in == out).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Conv2dOptions opt);

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& xs);

/// [N,C,H,W] -> [N,C,H,1]
template <typename Scalar> Var<Scalar> mean_over_width(const Var<Scalar>& x);
/// [N,C,H,W] -> [N,C,1,W]
template <typename Scalar> Var<Scalar> mean_over_height(const Var<Scalar>& x);

/// Differentiable separable linear resampling / filtering.
template <typename Scalar>
Var<Scalar> resample(const Var<Scalar>& x, const LinearMap1D& along_h, const LinearMap1D& along_w);

template <typename Scalar> Var<Scalar> resize_bilinear(const Var<Scalar>& x, int h, int w);
template <typename Scalar> Var<Scalar> upsample_nearest2x(const Var<Scalar>& x);

/// x / (||x||_channels + eps) at every (n, y, x).
template <typename Scalar> Var<Scalar> channel_normalize(const Var<Scalar>& x, Scalar eps);

/// Scalar reductions, result shape [1,1,1,1].
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);

/// Dot product with a constant tensor, used to reduce outputs for gradient checks.
template <typename Scalar> Var<Scalar> dot(const Var<Scalar>& x, const Tensor<Scalar>& w);

/// mask * a + (1 - mask) * b with `mask` broadcast over channels ([N,1,H,W] against [N,C,H,W]).
/// Accumulates in double, so the result always lies between a and b and mask == 1 returns a exactly.
template <typename Scalar>
Var<Scalar> convex_blend(const Var<Scalar>& mask, const Var<Scalar>& a, const Var<Scalar>& b);

/// Activation ops with non-differentiable points, keyed by op name, and the
/// input values at which their derivative jumps.
std::vector<double> kink_points(std::string_view op);

}  // namespace ampn
