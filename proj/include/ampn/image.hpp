#pragma once

#include "ampn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampn {

/// File or codec failure (missing file, unsupported format, write error).
class IoError : public std::runtime_error {
 public:
  enum class Kind { kMissingFile, kUnsupportedFormat, kEmptyImage, kWriteFailed, kCorrupt };
  IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class ColorSpace { kGrayscale, kRgb };

/// Image with values in [0,1], stored as a [1, C, H, W] float tensor, C in {1, 3}.
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Validates range, finiteness and minimum size (H, W >= 4).
  explicit ImageTensor(TensorF data);

  /// Builds an image from arbitrary data, clamping into [0,1] first.
  static ImageTensor clamped(TensorF data);

  const TensorF& tensor() const { return data_; }
  ColorSpace color_space() const { return data_.c() == 1 ? ColorSpace::kGrayscale : ColorSpace::kRgb; }
  int channels() const { return data_.c(); }
  int height() const { return data_.h(); }
  int width() const { return data_.w(); }

 private:
  TensorF data_;
};

/// Single-channel [1, 1, H, W] map in [0,1].
class FocusMask {
 public:
  FocusMask() = default;
  explicit FocusMask(TensorF data);
  static FocusMask constant(int h, int w, float v);

  const TensorF& tensor() const { return data_; }
  int height() const { return data_.h(); }
  int width() const { return data_.w(); }

 private:
  TensorF data_;
};

/// Reads an 8- or 16-bit grayscale/RGB PNG; codes map to [0,1] by code / (2^bits - 1).
/// Alpha channels are dropped and palettes expanded.
ImageTensor load_image(const std::filesystem::path& path);
/// Decodes without the ImageTensor size invariant (any non-empty image).
TensorF decode_png_tensor(const std::vector<std::uint8_t>& bytes);
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);

/// Loads a PNG as a focus mask. Colour inputs are averaged over channels.
FocusMask load_mask(const std::filesystem::path& path);
FocusMask decode_mask_png(const std::vector<std::uint8_t>& bytes);
FocusMask mask_from_image(const ImageTensor& image);

/// 8-bit quantization code for a value in [0,1]: round-half-up of v*255.
std::uint8_t quantize8(float v);

/// Encodes an 8-bit PNG (grayscale or RGB as per channel count).
std::vector<std::uint8_t> encode_png(const TensorF& image);
void save_image(const ImageTensor& image, const std::filesystem::path& path);
void save_mask(const FocusMask& mask, const std::filesystem::path& path);

/// Writes raw bytes to a file, throwing IoError on failure.
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace ampn
