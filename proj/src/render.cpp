#include "ampn/render.hpp"

namespace ampn {

Renderer::Renderer(const Checkpoint& checkpoint) : model_(checkpoint.instantiate()) {}

RenderResult Renderer::render(const RenderRequest& req) const {
  const Shape s = req.image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("render expects one grayscale or RGB image, got " + s.str());
  if (req.background_level) {
    const double b = *req.background_level;
    if (!(b >= 0.0 && b < 1.0)) throw RequestError("background level must lie in [0,1)");
    if (!(req.focus_threshold > 0.0 && req.focus_threshold <= 1.0)) throw RequestError("focus threshold must lie in (0,1]");
    if (!(b < req.focus_threshold)) throw RequestError("background level must be below the focus threshold");
  }
  if (req.mask) {
    const Shape ms = req.mask->shape();
    if (ms.n != 1 || ms.c != 1 || ms.h != s.h || ms.w != s.w) {
      throw ShapeError("mask " + std::to_string(ms.h) + "x" + std::to_string(ms.w) + " does not match image " +
                       std::to_string(s.h) + "x" + std::to_string(s.w));
    }
  } else if (!model_.config().use_g1) {
    throw ShapeError("checkpoint has no G1: a mask is required");
  }

  RenderResult out;
  out.input_height = s.h;
  out.input_width = s.w;
  const auto [h, w] = nearest_valid_size(s.h, s.w, model_.config().size_divisor());
  out.resized = h != s.h || w != s.w;

  ForwardOptions options;
  options.background_level = req.background_level;
  options.focus_threshold = req.focus_threshold;
  if (req.mask) {
    options.external_mask = resize_image(*req.mask, h, w);
    out.source = MaskSource::kUser;
  }

  NoGradGuard no_grad;
  const ForwardResult<float> fwd = model_.forward(resize_image(to_rgb(req.image), h, w), options);
  out.image = fwd.b0.value();
  out.mask = req.mask ? *options.external_mask : resize_image(fwd.predicted_mask.value(), h, w);
  return out;
}

}  // namespace ampn
