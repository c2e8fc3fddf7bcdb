#include "ampn/lpr.hpp"

namespace ampn {

template <typename Scalar>
LaplacianRefinement<Scalar>::LaplacianRefinement(const ModelConfig& config, Rng& rng) : config_(config) {
  if (config.use_refinement) {
    refiner_ = Backbone<Scalar>(config.refiner_backbone(), 10, 3, rng);
    if (config.use_dual_attention) attention_ = DualAttention<Scalar>(3, config.attention_reduction, rng);
    for (int k = 0; k < config.pyramid_levels; ++k) finetune_.emplace_back(3, rng);
  }
}

template <typename Scalar>
Var<Scalar> LaplacianRefinement<Scalar>::refinement_mask(const Tensor<Scalar>& coarsest_band, const Var<Scalar>& i_l,
                                                         const MgbgOutput<Scalar>& mgbg) const {
  const int h = coarsest_band.h(), w = coarsest_band.w();
  Var<Scalar> up_i = resize_bilinear(i_l, h, w);
  Var<Scalar> up_m = resize_bilinear(mgbg.mask, h, w);
  Var<Scalar> up_b = resize_bilinear(mgbg.bokeh, h, w);
  Var<Scalar> band(coarsest_band);
  Var<Scalar> r = refiner_(concat_channels<Scalar>({up_i, up_m, up_b, band}));
  return config_.use_dual_attention ? attention_(up_b, r) : r;
}

template <typename Scalar>
RefinementState<Scalar> LaplacianRefinement<Scalar>::refine_and_upsample(const std::vector<Tensor<Scalar>>& highfreq,
                                                                         const Var<Scalar>& i_l,
                                                                         const MgbgOutput<Scalar>& mgbg) const {
  const int levels = static_cast<int>(highfreq.size());
  if (levels != config_.pyramid_levels) {
    throw ShapeError("refine_and_upsample: got " + std::to_string(levels) + " bands, config expects " +
                     std::to_string(config_.pyramid_levels));
  }
  const Shape coarse = highfreq.back().shape();
  const Shape bl = mgbg.bokeh.shape();
  if (bl.h * 2 != coarse.h || bl.w * 2 != coarse.w || bl.c != coarse.c || bl.n != coarse.n) {
    throw ShapeError("refine_and_upsample: bokeh " + bl.str() + " does not sit one level below band " + coarse.str());
  }

  RefinementState<Scalar> state;
  state.modulated.resize(levels);
  Var<Scalar> running = mgbg.bokeh;
  Var<Scalar> modulation;
  if (config_.use_refinement) {
    state.refinement_mask = refinement_mask(highfreq.back(), i_l, mgbg);
    modulation = state.refinement_mask;
  }
  for (int k = levels - 1; k >= 0; --k) {
    Var<Scalar> band(highfreq[k]);
    if (config_.use_refinement) {
      if (k != levels - 1) modulation = resize_bilinear(modulation, highfreq[k].h(), highfreq[k].w());
      modulation = finetune_[k](modulation);
      band = mul(modulation, band);
    }
    state.modulated[k] = band;
    running = add(pyramid_expand(running), band);
  }
  state.b_int = running;
  return state;
}

template <typename Scalar>
void LaplacianRefinement<Scalar>::refiner_parameters(NamedParams<Scalar>& out) const {
  if (config_.use_refinement) refiner_.parameters("lpr.refiner", out);
}

template <typename Scalar>
void LaplacianRefinement<Scalar>::finetune_parameters(NamedParams<Scalar>& out) const {
  for (size_t k = 0; k < finetune_.size(); ++k) finetune_[k].parameters("lpr.finetune" + std::to_string(k), out);
}

template <typename Scalar>
void LaplacianRefinement<Scalar>::attention_parameters(NamedParams<Scalar>& input, NamedParams<Scalar>& output) const {
  if (!config_.use_refinement || !config_.use_dual_attention) return;
  attention_.input_attention.parameters("lpr.attention.input", input);
  attention_.output_attention.parameters("lpr.attention.output", output);
}

template <typename Scalar>
Var<Scalar> blend_final(const Var<Scalar>& i_0, const Var<Scalar>& b_int, const Var<Scalar>& mask) {
  require_same_shape(i_0.shape(), b_int.shape(), "blend_final");
  const Shape s = i_0.shape();
  Var<Scalar> m = mask;
  if (mask.shape().h != s.h || mask.shape().w != s.w) m = resize_bilinear(mask, s.h, s.w);
  return clamp(convex_blend(m, i_0, b_int), Scalar(0), Scalar(1));
}

template class LaplacianRefinement<float>;
template class LaplacianRefinement<double>;
template Var<float> blend_final<float>(const Var<float>&, const Var<float>&, const Var<float>&);
template Var<double> blend_final<double>(const Var<double>&, const Var<double>&, const Var<double>&);

}  // namespace ampn
