#pragma once

#include "ampn/archive.hpp"
#include "ampn/config.hpp"
#include "ampn/ops.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace ampn {

/// Mean absolute difference over all elements.
template <typename Scalar> Var<Scalar> l1_loss(const Var<Scalar>& a, const Var<Scalar>& b);

/// 11-tap Gaussian window, sigma 1.5, normalised to unit sum.
const std::vector<double>& ssim_window();
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all valid 11x11 windows and channels, for data in [0,1].
/// Throws ShapeError when either side is below 11 pixels.
template <typename Scalar> Var<Scalar> ssim(const Var<Scalar>& a, const Var<Scalar>& b);

/// Frozen convolutional feature stack for the perceptual distance.
///
/// Each stage is conv3x3 (padding 1, given stride) followed by ReLU; inputs are mapped from
/// [0,1] to [-1,1] first. The distance sums, over stages, the spatial mean of
/// sum_c lin_c * (f_a - f_b)^2 where f are channel-unit-normalised features.
class PerceptualExtractor {
 public:
  struct Stage {
    TensorF weight;  // [out, in, 3, 3]
    TensorF bias;    // [1, out, 1, 1]
    TensorF lin;     // [1, out, 1, 1] non-negative channel weights
    int stride = 1;
  };

  PerceptualExtractor() = default;
  PerceptualExtractor(std::vector<Stage> stages, std::string label);

  /// Deterministic random stack 3 -> 8 -> 16 -> 32 with unit channel weights.
  static PerceptualExtractor random(std::uint64_t seed);
  /// Reads an "extractor" container; see README for the tensor naming.
  static PerceptualExtractor load(const std::filesystem::path& path);
  /// Random extractor from config.extractor_seed unless config.extractor_weights names a file.
  static PerceptualExtractor from_config(const ModelConfig& config);
  void save(const std::filesystem::path& path) const;

  const std::vector<Stage>& stages() const { return stages_; }
  const std::string& label() const { return label_; }

  template <typename Scalar> std::vector<Var<Scalar>> features(const Var<Scalar>& x) const;
  template <typename Scalar> Var<Scalar> distance(const Var<Scalar>& a, const Var<Scalar>& b) const;

 private:
  std::vector<Stage> stages_;
  std::string label_;
};

template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  double l1 = 0;
  double perceptual = 0;
  double ssim_loss = 0;  // 1 - SSIM
};

/// w.l1 * L1 + w.perceptual * perceptual + w.ssim * (1 - SSIM), on the final image only.
template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& b0, const Var<Scalar>& target, const LossWeights& w,
                             const PerceptualExtractor& extractor);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) for [0,1] data; kInfinitePsnr when identical.
double psnr(const TensorF& a, const TensorF& b);

enum class MetricMode { kFloat, kQuantized8 };

/// Per-image and mean PSNR / SSIM / perceptual distance.
struct MetricReport {
  std::vector<std::string> names;
  std::vector<double> psnr, ssim, perceptual;
  std::string extractor_label;
  MetricMode mode = MetricMode::kFloat;

  void add(const std::string& name, const TensorF& prediction, const TensorF& target,
           const PerceptualExtractor& extractor);
  size_t size() const { return names.size(); }
  double mean_psnr() const;
  double mean_ssim() const;
  double mean_perceptual() const;

  /// Tab-separated per-image rows plus a mean row.
  std::string to_tsv() const;
  /// "Ours & PSNR & SSIM & LPIPS" with 2/4/4 decimals.
  std::string table_row(const std::string& method = "Ours") const;
};

}  // namespace ampn
