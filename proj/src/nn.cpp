#include "ampn/nn.hpp"

#include <cmath>

namespace ampn {

template <typename Scalar>
Conv2d<Scalar>::Conv2d(int in, int out, int kernel, Conv2dOptions o, Rng& rng) : opt(o) {
  const int in_per_group = o.groups > 1 ? 1 : in;
  Tensor<Scalar> w(Shape{out, in_per_group, kernel, kernel});
  const double fan_in = static_cast<double>(in_per_group) * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.array()[i] = static_cast<Scalar>(dist(rng));
  weight = Var<Scalar>(std::move(w), true);
  bias = Var<Scalar>(Tensor<Scalar>(Shape{1, out, 1, 1}), true);
}

template <typename Scalar>
void Conv2d<Scalar>::rescale(double scale, double b) {
  weight.mutable_value().array() *= static_cast<Scalar>(scale);
  bias.mutable_value().fill(static_cast<Scalar>(b));
}

template <typename Scalar>
void Conv2d<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
InvertedResidual<Scalar>::InvertedResidual(int in, int out, int stride, int expansion, Rng& rng)
    : expand_(in, in * expansion, 1, {}, rng),
      depthwise_(in * expansion, in * expansion, 3, {stride, 1, in * expansion}, rng),
      project_(in * expansion, out, 1, {}, rng),
      shortcut_(stride == 1 && in == out) {}

template <typename Scalar>
Var<Scalar> InvertedResidual<Scalar>::operator()(const Var<Scalar>& x) const {
  Var<Scalar> y = relu6(expand_(x));
  y = relu6(depthwise_(y));
  y = project_(y);
  return shortcut_ ? add(x, y) : y;
}

template <typename Scalar>
void InvertedResidual<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  expand_.parameters(prefix + ".expand", out);
  depthwise_.parameters(prefix + ".depthwise", out);
  project_.parameters(prefix + ".project", out);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
CoordinateAttention<Scalar>::CoordinateAttention(int channels, int reduction, Rng& rng)
    : channels_(channels), hidden_(std::max(8, channels / reduction)) {
  reduce = Conv2d<Scalar>(channels, hidden_, 1, {}, rng);
  gate_h = Conv2d<Scalar>(hidden_, channels, 1, {}, rng);
  gate_w = Conv2d<Scalar>(hidden_, channels, 1, {}, rng);
  gate_h.rescale(kGateWeightScale, kGateBias);
  gate_w.rescale(kGateWeightScale, kGateBias);
}

template <typename Scalar>
Var<Scalar> CoordinateAttention<Scalar>::operator()(const Var<Scalar>& x) const {
  if (x.shape().c != channels_) {
    throw ShapeError("coordinate attention expects " + std::to_string(channels_) + " channels, got " +
                     x.shape().str());
  }
  Var<Scalar> along_h = hardswish(reduce(mean_over_width(x)));   // [N, mid, H, 1]
  Var<Scalar> along_w = hardswish(reduce(mean_over_height(x)));  // [N, mid, 1, W]
  Var<Scalar> a_h = sigmoid(gate_h(along_h));
  Var<Scalar> a_w = sigmoid(gate_w(along_w));
  return mul(mul(x, a_h), a_w);
}

template <typename Scalar>
void CoordinateAttention<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  reduce.parameters(prefix + ".reduce", out);
  gate_h.parameters(prefix + ".gate_h", out);
  gate_w.parameters(prefix + ".gate_w", out);
}

template <typename Scalar>
DualAttention<Scalar>::DualAttention(int channels, int reduction, Rng& rng)
    : input_attention(channels, reduction, rng), output_attention(channels, reduction, rng) {}

template <typename Scalar>
Var<Scalar> DualAttention<Scalar>::operator()(const Var<Scalar>& x_in, const Var<Scalar>& x_out) const {
  require_same_shape(x_in.shape(), x_out.shape(), "dual attention");
  return add(input_attention(x_in), output_attention(x_out));
}

template <typename Scalar>
void DualAttention<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  input_attention.parameters(prefix + ".input", out);
  output_attention.parameters(prefix + ".output", out);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
FineTuneBlock<Scalar>::FineTuneBlock(int channels, Rng& rng)
    : first(channels, channels, 3, {1, 1, 1}, rng), second(channels, channels, 3, {1, 1, 1}, rng) {
  second.rescale(kOutputScale);
}

template <typename Scalar>
Var<Scalar> FineTuneBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  return second(leaky_relu(first(x), Scalar(kSlope)));
}

template <typename Scalar>
void FineTuneBlock<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  first.parameters(prefix + ".conv1", out);
  second.parameters(prefix + ".conv2", out);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Backbone<Scalar>::Backbone(const BackboneSpec& spec, int in_channels, int out_channels, Rng& rng,
                           double head_scale)
    : spec_(spec), in_channels_(in_channels), out_channels_(out_channels) {
  spec_.validate();
  const auto& w = spec_.stage_widths;
  stem_ = Conv2d<Scalar>(in_channels, w[0], 3, {1, 1, 1}, rng);
  for (int s = 1; s <= spec_.downsample_stages; ++s) {
    std::vector<InvertedResidual<Scalar>> stage;
    stage.emplace_back(w[s - 1], w[s], 2, spec_.expansion, rng);
    for (int b = 1; b < spec_.blocks_per_stage; ++b) stage.emplace_back(w[s], w[s], 1, spec_.expansion, rng);
    encoder_.push_back(std::move(stage));
  }
  for (int s = 0; s < spec_.downsample_stages; ++s) {
    decoder_.emplace_back(w[s + 1] + w[s], w[s], 3, Conv2dOptions{1, 1, 1}, rng);
  }
  head_ = Conv2d<Scalar>(w[0], out_channels, 1, {}, rng);
  if (head_scale != 1.0) head_.rescale(head_scale);
}

template <typename Scalar>
Var<Scalar> Backbone<Scalar>::operator()(const Var<Scalar>& x) const {
  const Shape s = x.shape();
  const int d = spec_.divisor();
  if (s.h % d != 0 || s.w % d != 0) {
    throw ShapeError("backbone: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " not divisible by " + std::to_string(d));
  }
  if (s.c != in_channels_) {
    throw ShapeError("backbone expects " + std::to_string(in_channels_) + " input channels, got " + s.str());
  }
  std::vector<Var<Scalar>> skips;
  Var<Scalar> y = relu6(stem_(x));
  for (const auto& stage : encoder_) {
    skips.push_back(y);
    for (const auto& block : stage) y = block(y);
  }
  for (int i = spec_.downsample_stages - 1; i >= 0; --i) {
    y = relu6(decoder_[i](concat_channels<Scalar>({upsample_nearest2x(y), skips[i]})));
  }
  return head_(y);
}

template <typename Scalar>
void Backbone<Scalar>::parameters(const std::string& prefix, NamedParams<Scalar>& out) const {
  stem_.parameters(prefix + ".stem", out);
  for (size_t s = 0; s < encoder_.size(); ++s)
    for (size_t b = 0; b < encoder_[s].size(); ++b) {
      encoder_[s][b].parameters(prefix + ".enc" + std::to_string(s) + "." + std::to_string(b), out);
    }
  for (size_t s = 0; s < decoder_.size(); ++s) decoder_[s].parameters(prefix + ".dec" + std::to_string(s), out);
  head_.parameters(prefix + ".head", out);
}

template <typename Scalar>
std::int64_t Backbone<Scalar>::parameter_count() const {
  NamedParams<Scalar> p;
  parameters("", p);
  return count_parameters(p);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class InvertedResidual<float>;
template class InvertedResidual<double>;
template class CoordinateAttention<float>;
template class CoordinateAttention<double>;
template class DualAttention<float>;
template class DualAttention<double>;
template class FineTuneBlock<float>;
template class FineTuneBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace ampn
