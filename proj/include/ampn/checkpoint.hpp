#pragma once

#include "ampn/archive.hpp"
#include "ampn/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ampn {

/// Raised when a checkpoint does not fit the requested configuration or model.
class CheckpointMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Adam moments aligned with AmpnModel::parameters() order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<TensorF> m, v;
};

/// Trained weights plus the configuration that produced them.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  ModelConfig config;
  std::int64_t training_step = 0;
  /// (group, name, value) in model parameter order.
  struct Entry {
    std::string group;
    std::string name;
    TensorF value;
  };
  std::vector<Entry> parameters;
  std::optional<AdamState> optimizer;

  static Checkpoint from_model(const AmpnModel<float>& model, std::int64_t step = 0);
  /// Copies the stored weights into `model`; throws CheckpointMismatch on any layout difference.
  void apply_to(AmpnModel<float>& model) const;
  /// Builds the model described by `config` and loads the weights into it.
  AmpnModel<float> instantiate() const;

  Archive to_archive() const;
  static Checkpoint from_archive(const Archive& archive);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  /// Loads and rejects checkpoints whose architecture differs from `expected`.
  static Checkpoint load(const std::filesystem::path& path, const ModelConfig& expected);
};

/// FNV-1a hash of a checkpoint file's bytes, as 16 hex digits.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace ampn
