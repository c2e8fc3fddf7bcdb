#pragma once

#include "ampn/tensor.hpp"

#include <stdexcept>

namespace ampn {

/// Blur-strength control: mask values below `threshold` (the out-of-focus area) are set to
/// `background_level`; values at or above it are left untouched. Lower levels render
/// stronger blur. Requires 0 <= background_level < threshold <= 1.
template <typename Scalar>
Tensor<Scalar> adjust_mask_strength(const Tensor<Scalar>& mask, double background_level, double threshold) {
  if (!(background_level >= 0.0) || !(threshold > 0.0) || threshold > 1.0) {
    throw std::invalid_argument("adjust_mask_strength: need background_level >= 0 and 0 < threshold <= 1");
  }
  if (!(background_level < threshold)) {
    throw std::invalid_argument("adjust_mask_strength: background_level must be below the focus threshold");
  }
  Tensor<Scalar> out = mask;
  const Scalar tau = static_cast<Scalar>(threshold);
  const Scalar b = static_cast<Scalar>(background_level);
  out.array() = (mask.array() >= tau).select(mask.array(), b);
  return out;
}

}  // namespace ampn
