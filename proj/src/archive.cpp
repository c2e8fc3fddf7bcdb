#include "ampn/archive.hpp"

#include "ampn/image.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace ampn {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'M', 'P', 'N'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw ArchiveError("archive truncated");
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

const TensorF* Archive::find(const std::string& name) const {
  for (const auto& [k, t] : tensors)
    if (k == name) return &t;
  return nullptr;
}

const std::string& Archive::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ArchiveError("archive lacks '" + key + "'");
  return it->second;
}

std::string Archive::serialize() const {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, version);
  put_string(out, kind);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    const Shape s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<size_t>(t.size()) * sizeof(float));
  }
  return out;
}

Archive Archive::parse(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ArchiveError("not an AMPN container");
  Reader r(bytes);
  r.get<std::uint32_t>();  // magic
  Archive a;
  a.version = r.get<std::uint32_t>();
  if (a.version != kVersion) throw ArchiveError("unsupported container version " + std::to_string(a.version));
  a.kind = r.get_string();
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    a.meta[k] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.get_string();
    Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ArchiveError("negative dimension in tensor " + name);
    TensorF t(s);
    r.get_raw(t.data(), static_cast<size_t>(t.size()) * sizeof(float));
    a.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw ArchiveError("trailing bytes after archive");
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  write_file(path, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

Archive Archive::load(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace ampn
