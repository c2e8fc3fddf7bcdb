#pragma once

#include "ampn/render.hpp"

#include <cstddef>
#include <memory>
#include <string>

namespace ampn {

struct ServiceOptions {
  std::string static_dir;                           // served at "/" when it exists
  std::size_t max_pixels = 4096u * 4096u;           // larger images get 413
  std::size_t max_body_bytes = 128u * 1024u * 1024u;
};

/// HTTP front end over one frozen model.
///
///   GET  /api/health  -> 200 {"status":"ok","model":"<hash>"} or 503 when no model is loaded
///   POST /api/render  multipart fields: image (PNG), mask (PNG, optional),
///                     background_level (decimal, optional), return_mask (0|1, optional)
///
/// Render replies with image/png and an X-AMPN-Mask-Source header (g1 or user); with
/// return_mask=1 the reply is multipart/form-data holding "image" and "mask" PNG parts.
/// Errors are application/json {"error": code, "detail": message} with 400, 413, 422 or 503.
class BokehService {
 public:
  /// `renderer` may be null, in which case every model route answers 503.
  BokehService(std::shared_ptr<const Renderer> renderer, std::string model_hash, ServiceOptions options = {});
  ~BokehService();
  BokehService(const BokehService&) = delete;
  BokehService& operator=(const BokehService&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Boundary used for multipart render replies.
inline constexpr const char* kMultipartBoundary = "ampn-render-boundary";

}  // namespace ampn
