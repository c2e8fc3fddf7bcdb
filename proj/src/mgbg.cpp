#include "ampn/mgbg.hpp"

namespace ampn {

template <typename Scalar>
MaskGuidedBokehGenerator<Scalar>::MaskGuidedBokehGenerator(const ModelConfig& config, Rng& rng)
    : config_(config) {
  const BackboneSpec spec = config.generator_backbone();
  if (config.use_g1) g1_ = Backbone<Scalar>(spec, 3, 1, rng);
  if (config.use_g2) {
    // A small head keeps I_int near zero at the start, so B_L begins close to I_L.
    g2_ = Backbone<Scalar>(spec, 4, 3, rng, 0.1);
    g2_attention_ = DualAttention<Scalar>(3, config.attention_reduction, rng);
  }
}

template <typename Scalar>
Var<Scalar> MaskGuidedBokehGenerator<Scalar>::predict_mask(const Var<Scalar>& i_l) const {
  if (!config_.use_g1) throw std::logic_error("predict_mask: model was built without G1");
  return sigmoid(g1_(i_l));
}

template <typename Scalar>
MgbgOutput<Scalar> MaskGuidedBokehGenerator<Scalar>::generate_bokeh(const Var<Scalar>& i_l,
                                                                   const Var<Scalar>& m_l) const {
  const Shape is = i_l.shape(), ms = m_l.shape();
  if (ms.c != 1 || ms.n != is.n || ms.h != is.h || ms.w != is.w) {
    throw ShapeError("generate_bokeh: mask " + ms.str() + " does not match image " + is.str());
  }
  if (!config_.use_g2) return {m_l, i_l, i_l};
  Var<Scalar> intermediate = g2_(concat_channels<Scalar>({i_l, m_l}));
  Var<Scalar> bokeh = g2_attention_(i_l, intermediate);
  return {m_l, intermediate, bokeh};
}

template <typename Scalar>
MgbgOutput<Scalar> MaskGuidedBokehGenerator<Scalar>::forward(
    const Var<Scalar>& i_l, const std::optional<Var<Scalar>>& external_mask) const {
  if (external_mask) return generate_bokeh(i_l, *external_mask);
  if (!config_.use_g1) throw std::invalid_argument("no mask available: G1 disabled and no external mask given");
  return generate_bokeh(i_l, predict_mask(i_l));
}

template <typename Scalar>
void MaskGuidedBokehGenerator<Scalar>::g1_parameters(NamedParams<Scalar>& out) const {
  if (config_.use_g1) g1_.parameters("g1", out);
}

template <typename Scalar>
void MaskGuidedBokehGenerator<Scalar>::g2_parameters(NamedParams<Scalar>& out) const {
  if (config_.use_g2) g2_.parameters("g2", out);
}

template <typename Scalar>
void MaskGuidedBokehGenerator<Scalar>::attention_parameters(NamedParams<Scalar>& input,
                                                            NamedParams<Scalar>& output) const {
  if (!config_.use_g2) return;
  g2_attention_.input_attention.parameters("g2_attention.input", input);
  g2_attention_.output_attention.parameters("g2_attention.output", output);
}

template class MaskGuidedBokehGenerator<float>;
template class MaskGuidedBokehGenerator<double>;

}  // namespace ampn
