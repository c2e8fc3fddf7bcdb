#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weights of the three loss terms on the final image.
struct LossWeights {
  double l1 = 10.0;
  double perceptual = 2.0;
  double ssim = 1.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double learning_rate = 2e-4;
  std::string optimizer = "adam";
  int image_height = 128;
  int image_width = 192;
  std::uint64_t seed = 1;
  int eval_every = 0;        // steps; 0 disables periodic evaluation
  int checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
  int max_steps = 0;         // 0: run all epochs

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Layout of one encoder-decoder network.
struct BackboneSpec {
  int downsample_stages = 3;
  std::vector<int> stage_widths{16, 24, 32, 48};  // stem width followed by one width per stage
  int blocks_per_stage = 1;
  int expansion = 4;
  std::string block_type = "inverted_residual";

  int divisor() const { return 1 << downsample_stages; }
  void validate() const;
};

/// Architecture, ablation switches, loss weights and training hyperparameters.
struct ModelConfig {
  int pyramid_levels = 2;
  int base_width = 16;    // G1/G2 stem width
  int refine_width = 8;   // refinement network stem width
  int blocks_per_stage = 1;
  int expansion = 4;
  int attention_reduction = 8;
  bool use_g1 = true;
  bool use_g2 = true;
  bool use_refinement = true;
  bool use_dual_attention = true;
  LossWeights loss_weights;
  TrainConfig train;
  std::uint64_t init_seed = 42;
  std::uint64_t extractor_seed = 7;
  std::string extractor_weights;  // empty: fixed random extractor

  /// Desk-scale defaults (CPU-trainable in minutes).
  static ModelConfig desk();
  /// Paper-scale widths and training hyperparameters (~5.4M parameters, 1024x1536).
  static ModelConfig paper_scale();

  BackboneSpec generator_backbone() const;
  BackboneSpec refiner_backbone() const;

  /// Required divisor of full-resolution image sides.
  int size_divisor() const;

  void validate() const;
  /// True when two configs describe the same parameter layout.
  bool architecture_matches(const ModelConfig& other) const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Ablation presets: "full", "wo_ref", "no_g2", "wo_att", "no_g1".
  ModelConfig variant(const std::string& name) const;
  static const std::vector<std::string>& variant_names();

  /// Applies one `key=value` assignment; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
};

}  // namespace ampn
