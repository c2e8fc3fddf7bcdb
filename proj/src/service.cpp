#include "ampn/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <charconv>
#include <filesystem>

namespace ampn {

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", code}, {"detail", detail}}.dump(), "application/json");
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }
std::string string_of(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

std::optional<double> parse_level(const std::string& text) {
  double v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) throw RequestError("background_level is not a number: '" + text + "'");
  return v;
}

std::string multipart(const std::string& image_png, const std::string& mask_png) {
  std::string body;
  auto part = [&body](const char* name, const std::string& png) {
    body += std::string("--") + kMultipartBoundary + "\r\n";
    body += std::string("Content-Disposition: form-data; name=\"") + name + "\"; filename=\"" + name + ".png\"\r\n";
    body += "Content-Type: image/png\r\n\r\n";
    body += png;
    body += "\r\n";
  };
  part("image", image_png);
  part("mask", mask_png);
  body += std::string("--") + kMultipartBoundary + "--\r\n";
  return body;
}

}  // namespace

struct BokehService::Impl {
  std::shared_ptr<const Renderer> renderer;
  std::string model_hash;
  ServiceOptions options;
  httplib::Server server;

  void handle_render(const httplib::Request& req, httplib::Response& res) const {
    if (!renderer) return send_error(res, 503, "model_not_loaded", "no checkpoint is loaded");
    if (!req.has_file("image")) return send_error(res, 400, "bad_request", "missing form field 'image'");
    try {
      RenderRequest r;
      const TensorF image = decode_png_tensor(bytes_of(req.get_file_value("image").content));
      if (static_cast<std::size_t>(image.h()) * static_cast<std::size_t>(image.w()) > options.max_pixels) {
        return send_error(res, 413, "too_large",
                          "image has " + std::to_string(image.h()) + "x" + std::to_string(image.w()) + " pixels");
      }
      r.image = ImageTensor(image).tensor();
      if (req.has_file("mask")) r.mask = decode_mask_png(bytes_of(req.get_file_value("mask").content)).tensor();
      if (req.has_file("background_level")) {
        const std::string level = req.get_file_value("background_level").content;
        if (!level.empty()) r.background_level = parse_level(level);
      }
      bool return_mask = false;
      if (req.has_file("return_mask")) {
        const std::string flag = req.get_file_value("return_mask").content;
        if (flag != "0" && flag != "1") throw RequestError("return_mask must be 0 or 1");
        return_mask = flag == "1";
      }

      const RenderResult out = renderer->render(r);
      const std::string png = string_of(encode_png(out.image));
      res.set_header("X-AMPN-Mask-Source", mask_source_name(out.source));
      if (out.resized) {
        res.set_header("X-AMPN-Resized", std::to_string(out.input_height) + "x" + std::to_string(out.input_width) +
                                             "->" + std::to_string(out.image.h()) + "x" + std::to_string(out.image.w()));
      }
      if (return_mask) {
        res.set_content(multipart(png, string_of(encode_png(out.mask))),
                        std::string("multipart/form-data; boundary=") + kMultipartBoundary);
      } else {
        res.set_content(png, "image/png");
      }
    } catch (const RequestError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const IoError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::invalid_argument& e) {
      // ShapeError and ConfigError: the request does not fit the loaded model.
      send_error(res, 422, "shape_mismatch", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  }
};

BokehService::BokehService(std::shared_ptr<const Renderer> renderer, std::string model_hash, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->renderer = std::move(renderer);
  impl_->model_hash = std::move(model_hash);
  impl_->options = std::move(options);
  Impl* impl = impl_.get();

  impl->server.set_payload_max_length(impl->options.max_body_bytes);
  impl->server.Get("/api/health", [impl](const httplib::Request&, httplib::Response& res) {
    if (!impl->renderer) return send_error(res, 503, "model_not_loaded", "no checkpoint is loaded");
    res.set_content(nlohmann::json{{"status", "ok"}, {"model", impl->model_hash}}.dump(), "application/json");
  });
  impl->server.Post("/api/render",
                    [impl](const httplib::Request& req, httplib::Response& res) { impl->handle_render(req, res); });
  impl->server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 413) return send_error(res, 413, "too_large", "request body exceeds the size limit");
    if (res.status == 404) return send_error(res, 404, "not_found", "no such route");
    send_error(res, res.status, "error", httplib::status_message(res.status));
  });
  if (!impl->options.static_dir.empty() && std::filesystem::is_directory(impl->options.static_dir)) {
    impl->server.set_mount_point("/", impl->options.static_dir);
  }
}

BokehService::~BokehService() { stop(); }

int BokehService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void BokehService::serve() { impl_->server.listen_after_bind(); }

void BokehService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void BokehService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace ampn
