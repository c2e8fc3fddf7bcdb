#pragma once

#include "ampn/mgbg.hpp"
#include "ampn/pyramid.hpp"

namespace ampn {

/// Intermediate tensors of one refinement pass, kept for inspection and tests.
template <typename Scalar>
struct RefinementState {
  Var<Scalar> refinement_mask;                // M_R at h_{L-1} resolution; undefined without refinement
  std::vector<Var<Scalar>> modulated;         // h'_k, finest first, same shapes as the pyramid bands
  Var<Scalar> b_int;                          // refined full-resolution bokeh
};

/// Refines the low-resolution bokeh with mask-modulated high-frequency bands and
/// upsamples it level by level back to the input resolution.
template <typename Scalar>
class LaplacianRefinement {
 public:
  LaplacianRefinement() = default;
  LaplacianRefinement(const ModelConfig& config, Rng& rng);

  /// `highfreq` finest first. `mgbg` outputs live at the residual resolution.
  RefinementState<Scalar> refine_and_upsample(const std::vector<Tensor<Scalar>>& highfreq, const Var<Scalar>& i_l,
                                              const MgbgOutput<Scalar>& mgbg) const;

  /// M_R from the upsampled (I_L, M_L, B_L) and h_{L-1}.
  Var<Scalar> refinement_mask(const Tensor<Scalar>& coarsest_band, const Var<Scalar>& i_l,
                              const MgbgOutput<Scalar>& mgbg) const;

  const FineTuneBlock<Scalar>& finetune(int level) const { return finetune_.at(level); }
  FineTuneBlock<Scalar>& finetune(int level) { return finetune_.at(level); }

  void refiner_parameters(NamedParams<Scalar>& out) const;
  void finetune_parameters(NamedParams<Scalar>& out) const;
  void attention_parameters(NamedParams<Scalar>& input, NamedParams<Scalar>& output) const;

 private:
  ModelConfig config_;
  Backbone<Scalar> refiner_;
  DualAttention<Scalar> attention_;
  std::vector<FineTuneBlock<Scalar>> finetune_;  // indexed by pyramid level
};

/// B_0 = M ⊙ I_0 + (1 − M) ⊙ B_int, clamped to [0,1]. A mask smaller than the image is
/// bilinearly upsampled first.
template <typename Scalar>
Var<Scalar> blend_final(const Var<Scalar>& i_0, const Var<Scalar>& b_int, const Var<Scalar>& mask);

}  // namespace ampn
