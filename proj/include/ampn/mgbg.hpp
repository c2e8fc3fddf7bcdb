#pragma once

#include "ampn/nn.hpp"

#include <optional>

namespace ampn {

/// Mask, pre-attention G2 output and low-resolution bokeh, all at I_L resolution.
template <typename Scalar>
struct MgbgOutput {
  Var<Scalar> mask;          // M_L, [N,1,h,w]
  Var<Scalar> intermediate;  // I_int, [N,3,h,w]
  Var<Scalar> bokeh;         // B_L, [N,3,h,w], unclamped
};

/// Two stacked generators: G1 predicts a focus mask from the low-frequency image, G2 renders
/// low-resolution bokeh conditioned on (image, mask) and merges it through dual attention.
template <typename Scalar>
class MaskGuidedBokehGenerator {
 public:
  MaskGuidedBokehGenerator() = default;
  MaskGuidedBokehGenerator(const ModelConfig& config, Rng& rng);

  /// Sigmoid mask in [0,1], same spatial size as `i_l`. Requires use_g1.
  Var<Scalar> predict_mask(const Var<Scalar>& i_l) const;

  /// concat(i_l, m_l) -> G2 -> I_int; B_L = attn_in(i_l) + attn_out(I_int).
  /// With use_g2 off, B_L and I_int are i_l itself.
  MgbgOutput<Scalar> generate_bokeh(const Var<Scalar>& i_l, const Var<Scalar>& m_l) const;

  /// Dispatches over the ablation flags; the external mask bypasses G1 when given.
  MgbgOutput<Scalar> forward(const Var<Scalar>& i_l, const std::optional<Var<Scalar>>& external_mask) const;

  void g1_parameters(NamedParams<Scalar>& out) const;
  void g2_parameters(NamedParams<Scalar>& out) const;
  void attention_parameters(NamedParams<Scalar>& input, NamedParams<Scalar>& output) const;

  bool has_g1() const { return config_.use_g1; }
  bool has_g2() const { return config_.use_g2; }

 private:
  ModelConfig config_;
  Backbone<Scalar> g1_;
  Backbone<Scalar> g2_;
  DualAttention<Scalar> g2_attention_;
};

}  // namespace ampn
