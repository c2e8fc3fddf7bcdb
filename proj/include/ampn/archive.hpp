#pragma once

#include "ampn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ampn {

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-file tensor container shared by checkpoints and extractor weights.
///
/// Layout (little-endian): "AMPN", u32 version, string kind, u32 meta count, then
/// (string key, string value) pairs, u32 tensor count, then per tensor: string name,
/// 4 x i32 shape (n, c, h, w) and n*c*h*w float32 values. Strings are u32 length + bytes.
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, TensorF>> tensors;

  const TensorF* find(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;

  std::string serialize() const;
  static Archive parse(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  /// Throws IoError(kMissingFile) if absent, ArchiveError if malformed.
  static Archive load(const std::filesystem::path& path);
};

/// 64-bit FNV-1a, printed as 16 hex digits by hash_hex.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

}  // namespace ampn
