#pragma once

#include "ampn/config.hpp"
#include "ampn/ops.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ampn {

using Rng = std::mt19937_64;

template <typename Scalar>
using NamedParams = std::vector<std::pair<std::string, Var<Scalar>>>;

template <typename Scalar>
std::int64_t count_parameters(const NamedParams<Scalar>& params) {
  std::int64_t n = 0;
  for (const auto& [name, p] : params) n += p.value().size();
  return n;
}

/// Kaiming (fan-in, normal) initialised convolution with bias.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, Conv2dOptions opt, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv2d(x, weight, bias, opt); }
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;
  /// Multiplies the initial weights by `scale` and sets every bias to `bias`.
  void rescale(double scale, double bias = 0.0);

  Var<Scalar> weight;
  Var<Scalar> bias;
  Conv2dOptions opt;
};

/// MobileNetV2 block: 1x1 expand -> ReLU6 -> 3x3 depthwise (stride) -> ReLU6 -> 1x1 linear
/// projection, with an identity shortcut when shapes allow.
template <typename Scalar>
class InvertedResidual {
 public:
  InvertedResidual() = default;
  InvertedResidual(int in, int out, int stride, int expansion, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;
  bool has_shortcut() const { return shortcut_; }

 private:
  Conv2d<Scalar> expand_, depthwise_, project_;
  bool shortcut_ = false;
};

/// Coordinate attention: direction-aware pooled gates a_h (per row) and a_w (per column),
/// output x * a_h * a_w. The shared reduce conv is applied to both pooled profiles.
/// Gates start almost open (sigmoid of about 3) so a fresh module passes its input through.
template <typename Scalar>
class CoordinateAttention {
 public:
  static constexpr double kGateBias = 3.0;
  static constexpr double kGateWeightScale = 0.1;

  CoordinateAttention() = default;
  CoordinateAttention(int channels, int reduction, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;

  int channels() const { return channels_; }
  int hidden() const { return hidden_; }

  Conv2d<Scalar> reduce, gate_h, gate_w;

 private:
  int channels_ = 0;
  int hidden_ = 0;
};

/// Two independent coordinate-attention modules on a block's input and output, summed.
template <typename Scalar>
class DualAttention {
 public:
  DualAttention() = default;
  DualAttention(int channels, int reduction, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x_in, const Var<Scalar>& x_out) const;
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;

  CoordinateAttention<Scalar> input_attention;
  CoordinateAttention<Scalar> output_attention;
};

/// conv3x3 -> LeakyReLU(0.2) -> conv3x3, channel preserving. The second conv starts at a
/// tenth of the usual scale so fresh blocks only lightly modulate the bands.
template <typename Scalar>
class FineTuneBlock {
 public:
  static constexpr double kSlope = 0.2;
  static constexpr double kOutputScale = 0.1;

  FineTuneBlock() = default;
  FineTuneBlock(int channels, Rng& rng);

  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;

  Conv2d<Scalar> first, second;
};

/// Inverted-residual encoder with `downsample_stages` stride-2 stages, mirrored decoder
/// (nearest upsample, concat skip, conv3x3) and a 1x1 head. Maps [in,H,W] -> [out,H,W].
template <typename Scalar>
class Backbone {
 public:
  Backbone() = default;
  /// `head_scale` multiplies the initial 1x1 head weights.
  Backbone(const BackboneSpec& spec, int in_channels, int out_channels, Rng& rng, double head_scale = 1.0);

  Var<Scalar> operator()(const Var<Scalar>& x) const;
  void parameters(const std::string& prefix, NamedParams<Scalar>& out) const;
  std::int64_t parameter_count() const;
  const BackboneSpec& spec() const { return spec_; }

 private:
  BackboneSpec spec_;
  int in_channels_ = 0;
  int out_channels_ = 0;
  Conv2d<Scalar> stem_;
  std::vector<std::vector<InvertedResidual<Scalar>>> encoder_;
  std::vector<Conv2d<Scalar>> decoder_;  // decoder_[i] fuses stage i+1 into stage i
  Conv2d<Scalar> head_;
};

}  // namespace ampn
