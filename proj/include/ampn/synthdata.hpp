#pragma once

#include "ampn/image.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ampn {

/// All-in-focus input, background-blurred target and the region that stays sharp.
struct SyntheticSample {
  TensorF input;      // [1,3,H,W]
  TensorF target;     // [1,3,H,W]
  TensorF gt_region;  // [1,1,H,W], exactly 0 or 1
  double blur_sigma = 0;
  std::uint64_t seed = 0;
};

struct SynthOptions {
  int height = 128;
  int width = 192;
  double sigma_lo = 2.0;
  double sigma_hi = 4.0;
  int feather = 3;  // width in pixels of the soft band outside the region
};

/// Per-sample seed derived from a dataset seed and the sample index (splitmix64 mixing).
std::uint64_t sample_seed(std::uint64_t dataset_seed, std::uint64_t index);

/// Textured background with 1-3 saturated, striped ellipses or polygons in front of it.
/// The background is Gaussian-blurred with sigma ~ U[sigma_lo, sigma_hi] and composited back
/// with a feathered edge that lies entirely outside the region, so the region is bit-exact.
SyntheticSample generate_sample(std::uint64_t seed, const SynthOptions& options = {});

/// Separable Gaussian blur with mirror borders; sigma == 0 returns the input unchanged.
TensorF gaussian_blur(const TensorF& image, double sigma);

/// One training or evaluation pair.
struct ImagePair {
  std::string name;
  TensorF input;
  TensorF target;
  std::optional<TensorF> gt_region;
};

/// Indexed, lazily produced list of pairs.
class PairDataset {
 public:
  using Loader = std::function<ImagePair(size_t)>;

  PairDataset() = default;
  PairDataset(size_t size, Loader loader) : size_(size), loader_(std::move(loader)) {}

  size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  ImagePair get(size_t i) const;
  /// Materialises every pair in memory.
  PairDataset cached() const;

 private:
  size_t size_ = 0;
  Loader loader_;
};

struct DatasetSplit {
  PairDataset train;
  PairDataset eval;
  size_t train_count = 0;  // indices [0, train_count) are train, the rest eval
};

/// First floor(train_frac * n) indices train, the remainder eval. Throws if either side is empty.
size_t split_point(size_t n, double train_frac);

/// Synthetic samples 0..n-1 split by index.
DatasetSplit make_dataset(size_t n, std::uint64_t seed, double train_frac, const SynthOptions& options = {});

/// Writes `<root>/{train,eval}/{input,target,gt_mask}/NNNNN.png`, numbered by global index.
void write_dataset(const std::filesystem::path& root, size_t n, std::uint64_t seed, double train_frac,
                   const SynthOptions& options = {});

/// Reads one split written by write_dataset (`<root>/<split>/{input,target[,gt_mask]}`).
/// Inputs not divisible by `divisor` are bilinearly resized to the nearest valid size.
PairDataset load_split(const std::filesystem::path& root, const std::string& split, int divisor);

/// EBB!-style layout: `<root>/original/X.png` paired with `<root>/bokeh/X.png` by file name,
/// sorted by name and split first-k-train.
DatasetSplit load_paired_directory(const std::filesystem::path& root, double train_frac, int divisor);

/// Nearest size (rounded, at least `divisor`) whose sides are multiples of `divisor`.
std::pair<int, int> nearest_valid_size(int h, int w, int divisor);
/// Bilinear resize of a [N,C,H,W] tensor.
TensorF resize_image(const TensorF& x, int h, int w);
/// Grayscale [N,1,H,W] becomes three identical channels; RGB passes through.
TensorF to_rgb(const TensorF& x);

}  // namespace ampn
