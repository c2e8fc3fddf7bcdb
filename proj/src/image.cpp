#include "ampn/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace ampn {

namespace {

void validate_unit_range(const TensorF& t, const char* what) {
  if (!t.all_finite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
  if (t.size() > 0 && (t.array().minCoeff() < 0.0f || t.array().maxCoeff() > 1.0f)) {
    throw std::invalid_argument(std::string(what) + ": values outside [0,1]");
  }
}

}  // namespace

ImageTensor::ImageTensor(TensorF data) : data_(std::move(data)) {
  if (data_.n() != 1 || (data_.c() != 1 && data_.c() != 3)) {
    throw ShapeError("ImageTensor: expected [1, 1|3, H, W], got " + data_.shape().str());
  }
  if (data_.h() < 4 || data_.w() < 4) throw ShapeError("ImageTensor: H and W must be >= 4");
  validate_unit_range(data_, "ImageTensor");
}

ImageTensor ImageTensor::clamped(TensorF data) {
  data.array() = data.array().max(0.0f).min(1.0f);
  return ImageTensor(std::move(data));
}

FocusMask::FocusMask(TensorF data) : data_(std::move(data)) {
  if (data_.n() != 1 || data_.c() != 1) {
    throw ShapeError("FocusMask: expected [1, 1, H, W], got " + data_.shape().str());
  }
  validate_unit_range(data_, "FocusMask");
}

FocusMask FocusMask::constant(int h, int w, float v) { return FocusMask(TensorF(Shape{1, 1, h, w}, v)); }

// ---------------------------------------------------------------------------
// PNG decoding

namespace {

struct ReadCursor {
  const std::uint8_t* data;
  size_t size;
  size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->size) png_error(png, "truncated PNG data");
  std::memcpy(out, cur->data + cur->pos, len);
  cur->pos += len;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct WriteBuffer {
  std::vector<std::uint8_t>* out;
};

void write_to_memory(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<WriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + len);
}

void flush_noop(png_structp) {}

}  // namespace

TensorF decode_png_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError(IoError::Kind::kUnsupportedFormat, "not a PNG stream");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(IoError::Kind::kCorrupt, "libpng initialisation failed");
  }
  ReadCursor cur{bytes.data(), bytes.size(), 0};
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(IoError::Kind::kCorrupt, "PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cur, read_from_memory);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (width == 0 || height == 0) throw IoError(IoError::Kind::kEmptyImage, "zero-sized image");
  if (channels != 1 && channels != 3) {
    throw IoError(IoError::Kind::kUnsupportedFormat, "unsupported channel count " + std::to_string(channels));
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw IoError(IoError::Kind::kUnsupportedFormat, "unsupported bit depth " + std::to_string(bit_depth));
  }
  const int h = static_cast<int>(height), w = static_cast<int>(width);
  TensorF t(Shape{1, channels, h, w});
  const float denom = bit_depth == 8 ? 255.0f : 65535.0f;
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = rows[y];
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const size_t i = static_cast<size_t>(x) * channels + c;
        unsigned code = bit_depth == 8 ? row[i] : (static_cast<unsigned>(row[2 * i]) << 8) | row[2 * i + 1];
        t(0, c, y, x) = static_cast<float>(code) / denom;
      }
  }
  return t;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes) { return ImageTensor(decode_png_tensor(bytes)); }

ImageTensor load_image(const std::filesystem::path& path) { return decode_png(read_file(path)); }

FocusMask mask_from_image(const ImageTensor& image) {
  const TensorF& t = image.tensor();
  if (t.c() == 1) return FocusMask(t);
  TensorF m(Shape{1, 1, t.h(), t.w()});
  const Eigen::Index plane = t.shape().plane();
  using CMap = Eigen::Map<const Eigen::ArrayXf>;
  m.array() = (CMap(t.plane(0, 0), plane) + CMap(t.plane(0, 1), plane) + CMap(t.plane(0, 2), plane)) / 3.0f;
  m.array() = m.array().max(0.0f).min(1.0f);
  return FocusMask(std::move(m));
}

FocusMask decode_mask_png(const std::vector<std::uint8_t>& bytes) { return mask_from_image(decode_png(bytes)); }
FocusMask load_mask(const std::filesystem::path& path) { return mask_from_image(load_image(path)); }

// ---------------------------------------------------------------------------
// PNG encoding

std::uint8_t quantize8(float v) {
  const float c = std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
  return static_cast<std::uint8_t>(std::min(255.0f, c));
}

std::vector<std::uint8_t> encode_png(const TensorF& image) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw ShapeError("encode_png: expected [1, 1|3, H, W], got " + image.shape().str());
  }
  const int h = image.h(), w = image.w(), ch = image.c();
  std::vector<std::uint8_t> pixels(static_cast<size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) pixels[(static_cast<size_t>(y) * w + x) * ch + c] = quantize8(image(0, c, y, x));

  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(IoError::Kind::kWriteFailed, "libpng initialisation failed");
  }
  WriteBuffer buf{&out};
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * ch;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(IoError::Kind::kWriteFailed, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &buf, write_to_memory, flush_noop);
  png_set_IHDR(png, info, w, h, 8, ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
  write_file(path, encode_png(image.tensor()));
}

void save_mask(const FocusMask& mask, const std::filesystem::path& path) {
  write_file(path, encode_png(mask.tensor()));
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoError::Kind::kWriteFailed, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoError::Kind::kWriteFailed, "write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Kind::kMissingFile, "cannot open: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace ampn
