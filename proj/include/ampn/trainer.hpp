#pragma once

#include "ampn/checkpoint.hpp"
#include "ampn/objectives.hpp"
#include "ampn/synthdata.hpp"

#include <functional>
#include <optional>
#include <stdexcept>

namespace ampn {

/// Thrown when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam with fixed step size and bias correction.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const NamedParams<float>& params);
  const AdamState& state() const { return state_; }
  void set_state(AdamState state) { state_ = std::move(state); }

 private:
  double lr_, beta1_, beta2_, eps_;
  AdamState state_;
};

struct StepRecord {
  std::int64_t step = 0;
  double l1 = 0, perceptual = 0, ssim_loss = 0, total = 0;
};

struct TrainOptions {
  /// Overrides config.train.max_steps when positive.
  std::int64_t max_steps = 0;
  /// Continue from this checkpoint's weights, optimizer state and step.
  std::optional<Checkpoint> resume;
  /// Where periodic and final checkpoints go; empty disables writing.
  std::filesystem::path checkpoint_path;
  /// Loss history CSV; empty disables writing.
  std::filesystem::path history_path;
  /// Evaluated every config.train.eval_every steps when non-empty.
  PairDataset eval_set;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::int64_t, const MetricReport&)> on_eval;
};

struct TrainResult {
  Checkpoint checkpoint;  // includes optimizer state
  std::vector<StepRecord> history;
};

/// Deterministic batch indices for global step `step`: each epoch is a seeded permutation.
std::vector<size_t> batch_indices(size_t dataset_size, int batch_size, std::uint64_t seed, std::int64_t step);

/// Minimises the total loss on B_0 over `train`. Models without G1 take the pairs' gt_region as mask.
TrainResult train_model(const ModelConfig& config, const PairDataset& train, const TrainOptions& options = {});

/// Frozen forward pass over `data` with per-image metrics.
MetricReport evaluate(const AmpnModel<float>& model, const PairDataset& data, const PerceptualExtractor& extractor,
                      MetricMode mode = MetricMode::kFloat);

/// IoU between `mask > threshold` (bilinearly resized to the region size) and `region > 0.5`.
double mask_iou(const TensorF& mask, const TensorF& region, double threshold = 0.5);

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history);

}  // namespace ampn
