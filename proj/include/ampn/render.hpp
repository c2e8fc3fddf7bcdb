#pragma once

#include "ampn/checkpoint.hpp"
#include "ampn/synthdata.hpp"

#include <optional>
#include <stdexcept>
#include <string>

namespace ampn {

/// Invalid request parameters (maps to exit code 1 / HTTP 400).
class RequestError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RenderRequest {
  TensorF image;                 // [1,1|3,H,W] in [0,1]
  std::optional<TensorF> mask;   // [1,1,H,W]; replaces G1 when present
  std::optional<double> background_level;
  double focus_threshold = 0.8;
};

enum class MaskSource { kG1, kUser };
inline const char* mask_source_name(MaskSource s) { return s == MaskSource::kG1 ? "g1" : "user"; }

struct RenderResult {
  TensorF image;  // B_0 at the processed resolution
  TensorF mask;   // M_L (G1 output upsampled, or the user mask) at the same resolution, before adjustment
  MaskSource source = MaskSource::kG1;
  int input_height = 0, input_width = 0;
  bool resized = false;
};

/// Frozen model plus the request-level plumbing shared by the CLI and the HTTP service:
/// grayscale promotion, resizing to the nearest valid size, mask validation and strength control.
class Renderer {
 public:
  explicit Renderer(const Checkpoint& checkpoint);

  /// Thread-safe; each call runs single-threaded on the shared read-only weights.
  RenderResult render(const RenderRequest& request) const;

  const ModelConfig& config() const { return model_.config(); }

 private:
  AmpnModel<float> model_;
};

}  // namespace ampn
