#include "ampn/model.hpp"

namespace ampn {

namespace {

template <typename Scalar>
Tensor<Scalar> adjusted(const Tensor<Scalar>& mask, const ForwardOptions& options) {
  if (!options.background_level) return mask;
  return adjust_mask_strength(mask, *options.background_level, options.focus_threshold);
}

}  // namespace

template <typename Scalar>
AmpnModel<Scalar>::AmpnModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  // Sub-networks draw from one generator in a fixed order, so a seed pins every weight.
  Rng rng(config_.init_seed);
  mgbg_ = MaskGuidedBokehGenerator<Scalar>(config_, rng);
  lpr_ = LaplacianRefinement<Scalar>(config_, rng);
}

template <typename Scalar>
ForwardResult<Scalar> AmpnModel<Scalar>::forward(const Tensor<Scalar>& i0, const ForwardOptions& options) const {
  const Shape s = i0.shape();
  if (s.c != 3) throw ShapeError("model expects 3-channel input, got " + s.str());
  const int d = config_.size_divisor();
  if (s.h % d != 0 || s.w % d != 0) {
    throw ShapeError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) + " not divisible by " +
                     std::to_string(d));
  }
  if (!config_.use_g1 && !options.external_mask) {
    throw std::invalid_argument("model was built without G1: an external mask is required");
  }

  ForwardResult<Scalar> out;
  out.pyramid = decompose(i0, config_.pyramid_levels);
  Var<Scalar> i_l(out.pyramid.residual);
  const Shape low = out.pyramid.residual.shape();

  std::optional<Var<Scalar>> mask_low;
  if (options.external_mask) {
    const Shape ms = options.external_mask->shape();
    if (ms.n != s.n || ms.c != 1 || ms.h != s.h || ms.w != s.w) {
      throw ShapeError("mask " + ms.str() + " does not match image " + s.str());
    }
    out.blend_mask = Var<Scalar>(adjusted(options.external_mask->template cast<Scalar>(), options));
    Var<Scalar> full(options.external_mask->template cast<Scalar>());
    NoGradGuard no_grad;
    mask_low = Var<Scalar>(adjusted(resize_bilinear(full, low.h, low.w).value(), options));
  } else {
    out.predicted_mask = mgbg_.predict_mask(i_l);
    if (options.background_level) {
      Tensor<Scalar> full = resize_bilinear(out.predicted_mask.detach(), s.h, s.w).value();
      out.blend_mask = Var<Scalar>(adjusted(full, options));
      mask_low = Var<Scalar>(adjusted(out.predicted_mask.value(), options));
    } else {
      mask_low = out.predicted_mask;
    }
  }

  out.mgbg = mgbg_.generate_bokeh(i_l, *mask_low);
  out.refinement = lpr_.refine_and_upsample(out.pyramid.highfreq, i_l, out.mgbg);
  if (!out.blend_mask.defined()) out.blend_mask = resize_bilinear(out.mgbg.mask, s.h, s.w);
  out.b0 = blend_final(Var<Scalar>(i0), out.refinement.b_int, out.blend_mask);
  return out;
}

template <typename Scalar>
std::map<std::string, NamedParams<Scalar>> AmpnModel<Scalar>::parameter_groups() const {
  std::map<std::string, NamedParams<Scalar>> groups;
  auto keep = [&groups](const std::string& name, NamedParams<Scalar> p) {
    if (!p.empty()) groups.emplace(name, std::move(p));
  };
  NamedParams<Scalar> g1, g2, refiner, finetune, g2_in, g2_out, lpr_in, lpr_out;
  mgbg_.g1_parameters(g1);
  mgbg_.g2_parameters(g2);
  mgbg_.attention_parameters(g2_in, g2_out);
  lpr_.refiner_parameters(refiner);
  lpr_.finetune_parameters(finetune);
  lpr_.attention_parameters(lpr_in, lpr_out);
  keep("g1", std::move(g1));
  keep("g2", std::move(g2));
  keep("lpr_refiner", std::move(refiner));
  keep("lpr_finetune", std::move(finetune));
  keep("attention.g2_input", std::move(g2_in));
  keep("attention.g2_output", std::move(g2_out));
  keep("attention.lpr_input", std::move(lpr_in));
  keep("attention.lpr_output", std::move(lpr_out));
  return groups;
}

template <typename Scalar>
NamedParams<Scalar> AmpnModel<Scalar>::parameters() const {
  NamedParams<Scalar> all;
  for (auto& [group, params] : parameter_groups()) all.insert(all.end(), params.begin(), params.end());
  return all;
}

template <typename Scalar>
void AmpnModel<Scalar>::zero_grad() const {
  for (auto& [name, p] : parameters()) {
    Var<Scalar> v = p;
    v.zero_grad();
  }
}

std::int64_t parameter_count(const ModelConfig& config) { return AmpnModel<float>(config).parameter_count(); }

template class AmpnModel<float>;
template class AmpnModel<double>;

}  // namespace ampn
