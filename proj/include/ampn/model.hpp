#pragma once

#include "ampn/lpr.hpp"
#include "ampn/mask_strength.hpp"

#include <map>
#include <optional>

namespace ampn {

struct ForwardOptions {
  /// Full-resolution mask [N,1,H,W]; bypasses G1 when present.
  std::optional<TensorF> external_mask;
  /// Background intensity for blur-strength control; applied to the mask fed to G2 and to the blend mask.
  std::optional<double> background_level;
  double focus_threshold = 0.8;
};

template <typename Scalar>
struct ForwardResult {
  PyramidDecomposition<Scalar> pyramid;
  MgbgOutput<Scalar> mgbg;           // mask is the M_L that conditioned G2
  Var<Scalar> predicted_mask;        // G1 output before any strength adjustment; undefined with an external mask
  RefinementState<Scalar> refinement;
  Var<Scalar> blend_mask;            // full-resolution mask used in the final blend
  Var<Scalar> b0;                    // final image in [0,1]
};

/// The whole network: pyramid decomposition, mask-guided generator and refinement.
template <typename Scalar>
class AmpnModel {
 public:
  AmpnModel() = default;
  explicit AmpnModel(const ModelConfig& config);

  /// `i0`: [N,3,H,W] with H, W divisible by config().size_divisor().
  ForwardResult<Scalar> forward(const Tensor<Scalar>& i0, const ForwardOptions& options = {}) const;

  const ModelConfig& config() const { return config_; }
  const MaskGuidedBokehGenerator<Scalar>& mgbg() const { return mgbg_; }
  const LaplacianRefinement<Scalar>& lpr() const { return lpr_; }
  LaplacianRefinement<Scalar>& lpr() { return lpr_; }

  /// All trainable tensors in a fixed order with stable names.
  NamedParams<Scalar> parameters() const;
  /// The same tensors keyed by sub-network: g1, g2, lpr_refiner, lpr_finetune and the four
  /// attention modules (attention.g2_input, attention.g2_output, attention.lpr_input,
  /// attention.lpr_output). Absent sub-networks are omitted.
  std::map<std::string, NamedParams<Scalar>> parameter_groups() const;
  std::int64_t parameter_count() const { return count_parameters(parameters()); }

  void zero_grad() const;

 private:
  ModelConfig config_;
  MaskGuidedBokehGenerator<Scalar> mgbg_;
  LaplacianRefinement<Scalar> lpr_;
};

/// Parameter count of the model `config` describes, without keeping it around.
std::int64_t parameter_count(const ModelConfig& config);

}  // namespace ampn
