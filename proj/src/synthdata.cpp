#include "ampn/synthdata.hpp"

#include "ampn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace ampn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Color {
  double r, g, b;
};

Color hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Color out{0, 0, 0};
  switch (static_cast<int>(hp)) {
    case 0: out = {c, x, 0}; break;
    case 1: out = {x, c, 0}; break;
    case 2: out = {0, c, x}; break;
    case 3: out = {0, x, c}; break;
    case 4: out = {x, 0, c}; break;
    default: out = {c, 0, x}; break;
  }
  const double m = v - c;
  return {out.r + m, out.g + m, out.b + m};
}

/// Inside test for one foreground shape.
struct Shape2D {
  bool ellipse = true;
  double cx = 0, cy = 0, ax = 0, ay = 0, angle = 0;
  std::vector<std::pair<double, double>> polygon;  // convex, counter-clockwise

  bool contains(double x, double y) const {
    if (ellipse) {
      const double dx = x - cx, dy = y - cy;
      const double u = dx * std::cos(angle) + dy * std::sin(angle);
      const double v = -dx * std::sin(angle) + dy * std::cos(angle);
      return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
    }
    const size_t n = polygon.size();
    for (size_t i = 0; i < n; ++i) {
      const auto [x0, y0] = polygon[i];
      const auto [x1, y1] = polygon[(i + 1) % n];
      if ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0) return false;
    }
    return true;
  }
};

Shape2D random_shape(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double side = std::min(h, w);
  Shape2D s;
  s.cx = w * (0.2 + 0.6 * u(rng));
  s.cy = h * (0.2 + 0.6 * u(rng));
  const double radius = side * (0.14 + 0.14 * u(rng));
  s.ellipse = u(rng) < 0.5;
  if (s.ellipse) {
    s.ax = radius * (0.7 + 0.5 * u(rng));
    s.ay = radius * (0.7 + 0.5 * u(rng));
    s.angle = std::numbers::pi * u(rng);
  } else {
    const int vertices = 3 + static_cast<int>(u(rng) * 4);
    std::vector<double> angles(vertices);
    for (double& a : angles) a = 2.0 * std::numbers::pi * u(rng);
    std::sort(angles.begin(), angles.end());
    for (double a : angles) {
      const double r = radius * (0.8 + 0.4 * u(rng));
      s.polygon.emplace_back(s.cx + r * std::cos(a), s.cy + r * std::sin(a));
    }
    // Degenerate polygons (all vertices on one side) fall back to an ellipse.
    double area = 0;
    for (int i = 0; i < vertices; ++i) {
      const auto [x0, y0] = s.polygon[i];
      const auto [x1, y1] = s.polygon[(i + 1) % vertices];
      area += x0 * y1 - x1 * y0;
    }
    if (std::abs(area) < radius * radius) {
      s.ellipse = true;
      s.ax = s.ay = radius;
    }
  }
  return s;
}

TensorF blur_along(const TensorF& image, const std::vector<double>& kernel) {
  const LinearMap1D along_h = LinearMap1D::filter_reflect(image.h(), kernel);
  const LinearMap1D along_w = LinearMap1D::filter_reflect(image.w(), kernel);
  return apply_separable(image, along_h, along_w);
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::uint64_t index) {
  return splitmix64(dataset_seed ^ splitmix64(index + 1));
}

TensorF gaussian_blur(const TensorF& image, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be non-negative");
  if (sigma == 0.0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int k = -radius; k <= radius; ++k) total += kernel[k + radius] = std::exp(-k * k / (2.0 * sigma * sigma));
  for (double& v : kernel) v /= total;
  return blur_along(image, kernel);
}

SyntheticSample generate_sample(std::uint64_t seed, const SynthOptions& opt) {
  const int h = opt.height, w = opt.width;
  if (h < 16 || w < 16) throw std::invalid_argument("generate_sample: image must be at least 16x16");
  if (!(opt.sigma_lo >= 0.0) || opt.sigma_hi < opt.sigma_lo) {
    throw std::invalid_argument("generate_sample: need 0 <= sigma_lo <= sigma_hi");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticSample s;
  s.seed = seed;
  s.input = TensorF(ampn::Shape{1, 3, h, w});
  s.gt_region = TensorF(ampn::Shape{1, 1, h, w});

  // Background: muted two-colour gradient, coarse colour noise and fine grain.
  Color c0 = hsv(u(rng), 0.25 * u(rng), 0.35 + 0.4 * u(rng));
  Color c1 = hsv(u(rng), 0.25 * u(rng), 0.35 + 0.4 * u(rng));
  const double theta = 2.0 * std::numbers::pi * u(rng);
  const double grain = 0.08 + 0.07 * u(rng);
  const int gh = std::max(2, h / 16), gw = std::max(2, w / 16);
  TensorF coarse(ampn::Shape{1, 3, gh, gw});
  for (Eigen::Index i = 0; i < coarse.size(); ++i) coarse.array()[i] = static_cast<float>(0.12 * normal(rng));
  const TensorF field = resize_image(coarse, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * ((x - w / 2.0) * std::cos(theta) + (y - h / 2.0) * std::sin(theta)) /
                                 (0.5 * std::hypot(w, h));
      const double base[3] = {c0.r + (c1.r - c0.r) * t, c0.g + (c1.g - c0.g) * t, c0.b + (c1.b - c0.b) * t};
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + field(0, c, y, x) + grain * (2.0 * u(rng) - 1.0);
        s.input(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  // Foreground: saturated striped shapes.
  const int shapes = 1 + static_cast<int>(u(rng) * 3);
  for (int k = 0; k < shapes; ++k) {
    const Shape2D shape = random_shape(rng, h, w);
    const Color color = hsv(u(rng), 0.75 + 0.25 * u(rng), 0.7 + 0.3 * u(rng));
    const double period = 3.0 + 4.0 * u(rng);
    const double stripe_angle = std::numbers::pi * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!shape.contains(x + 0.5, y + 0.5)) continue;
        const double phase = (x * std::cos(stripe_angle) + y * std::sin(stripe_angle)) * 2.0 * std::numbers::pi / period;
        const double shade = 0.75 + 0.25 * std::sin(phase);
        const double rgb[3] = {color.r, color.g, color.b};
        for (int c = 0; c < 3; ++c) {
          const double v = rgb[c] * shade + 0.05 * (2.0 * u(rng) - 1.0);
          s.input(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        s.gt_region(0, 0, y, x) = 1.0f;
      }
    }
  }

  s.blur_sigma = opt.sigma_lo + (opt.sigma_hi - opt.sigma_lo) * u(rng);
  const TensorF blurred = gaussian_blur(s.input, s.blur_sigma);

  // Feather weight: 1 inside the region, falling linearly to 0 over `feather` pixels outside it.
  const int f = std::max(0, opt.feather);
  s.target = TensorF(s.input.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double alpha = 0.0;
      if (s.gt_region(0, 0, y, x) == 1.0f) {
        alpha = 1.0;
      } else if (f > 0) {
        double nearest = f + 1.0;
        for (int dy = -f; dy <= f; ++dy) {
          for (int dx = -f; dx <= f; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w || s.gt_region(0, 0, yy, xx) != 1.0f) continue;
            nearest = std::min(nearest, std::hypot(dx, dy));
          }
        }
        alpha = std::max(0.0, 1.0 - nearest / (f + 1.0));
      }
      for (int c = 0; c < 3; ++c) {
        s.target(0, c, y, x) =
            alpha == 1.0 ? s.input(0, c, y, x)
                         : static_cast<float>(alpha * s.input(0, c, y, x) + (1.0 - alpha) * blurred(0, c, y, x));
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

ImagePair PairDataset::get(size_t i) const {
  if (i >= size_) throw std::out_of_range("dataset index " + std::to_string(i) + " out of range");
  return loader_(i);
}

PairDataset PairDataset::cached() const {
  auto items = std::make_shared<std::vector<ImagePair>>();
  items->reserve(size_);
  for (size_t i = 0; i < size_; ++i) items->push_back(get(i));
  return PairDataset(size_, [items](size_t i) { return (*items)[i]; });
}

size_t split_point(size_t n, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("train fraction must be in (0,1)");
  const auto k = static_cast<size_t>(std::floor(train_frac * static_cast<double>(n)));
  if (k == 0 || k >= n) {
    throw std::invalid_argument("split of " + std::to_string(n) + " samples leaves one side empty");
  }
  return k;
}

namespace {

ImagePair synthetic_pair(std::uint64_t seed, size_t index, const SynthOptions& options) {
  SyntheticSample s = generate_sample(sample_seed(seed, index), options);
  char name[16];
  std::snprintf(name, sizeof name, "%05zu", index);
  return {name, std::move(s.input), std::move(s.target), std::move(s.gt_region)};
}

}  // namespace

DatasetSplit make_dataset(size_t n, std::uint64_t seed, double train_frac, const SynthOptions& options) {
  if (n < 2) throw std::invalid_argument("make_dataset needs at least 2 samples");
  DatasetSplit split;
  split.train_count = split_point(n, train_frac);
  const size_t k = split.train_count;
  split.train = PairDataset(k, [seed, options](size_t i) { return synthetic_pair(seed, i, options); });
  split.eval = PairDataset(n - k, [seed, options, k](size_t i) { return synthetic_pair(seed, k + i, options); });
  return split;
}

void write_dataset(const std::filesystem::path& root, size_t n, std::uint64_t seed, double train_frac,
                   const SynthOptions& options) {
  const DatasetSplit split = make_dataset(n, seed, train_frac, options);
  for (const auto& [name, part] : {std::pair{"train", &split.train}, std::pair{"eval", &split.eval}}) {
    for (const char* sub : {"input", "target", "gt_mask"}) std::filesystem::create_directories(root / name / sub);
    for (size_t i = 0; i < part->size(); ++i) {
      const ImagePair p = part->get(i);
      const std::string file = p.name + ".png";
      save_image(ImageTensor(p.input), root / name / "input" / file);
      save_image(ImageTensor(p.target), root / name / "target" / file);
      save_mask(FocusMask(*p.gt_region), root / name / "gt_mask" / file);
    }
  }
}

std::pair<int, int> nearest_valid_size(int h, int w, int divisor) {
  auto fit = [divisor](int v) {
    const int k = static_cast<int>(std::lround(static_cast<double>(v) / divisor));
    return std::max(1, k) * divisor;
  };
  return {fit(h), fit(w)};
}

TensorF resize_image(const TensorF& x, int h, int w) {
  if (x.h() == h && x.w() == w) return x;
  return apply_separable(x, LinearMap1D::bilinear(x.h(), h), LinearMap1D::bilinear(x.w(), w));
}

TensorF to_rgb(const TensorF& x) {
  if (x.c() == 3) return x;
  if (x.c() != 1) throw ShapeError("to_rgb expects 1 or 3 channels, got " + x.shape().str());
  TensorF out(ampn::Shape{x.n(), 3, x.h(), x.w()});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < 3; ++c) std::copy_n(x.plane(n, 0), x.shape().plane(), out.plane(n, c));
  return out;
}

namespace {

std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(IoError::Kind::kMissingFile, "missing directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

TensorF fitted(const TensorF& x, int divisor) {
  const auto [h, w] = nearest_valid_size(x.h(), x.w(), divisor);
  return resize_image(x, h, w);
}

ImagePair load_pair(const std::filesystem::path& input, const std::filesystem::path& target,
                    const std::optional<std::filesystem::path>& mask, int divisor) {
  ImagePair p;
  p.name = input.stem().string();
  p.input = fitted(to_rgb(load_image(input).tensor()), divisor);
  p.target = fitted(to_rgb(load_image(target).tensor()), divisor);
  if (!(p.input.shape() == p.target.shape())) {
    throw ShapeError("pair " + p.name + ": input and target sizes differ");
  }
  if (mask) p.gt_region = fitted(load_mask(*mask).tensor(), divisor);
  return p;
}

}  // namespace

PairDataset load_split(const std::filesystem::path& root, const std::string& split, int divisor) {
  const auto inputs = sorted_pngs(root / split / "input");
  const auto mask_dir = root / split / "gt_mask";
  const bool masks = std::filesystem::is_directory(mask_dir);
  for (const auto& f : inputs) {
    if (!std::filesystem::exists(root / split / "target" / f.filename())) {
      throw IoError(IoError::Kind::kMissingFile, "no target for " + f.string());
    }
  }
  return PairDataset(inputs.size(), [=](size_t i) {
    const auto name = inputs[i].filename();
    std::optional<std::filesystem::path> mask;
    if (masks && std::filesystem::exists(mask_dir / name)) mask = mask_dir / name;
    return load_pair(inputs[i], root / split / "target" / name, mask, divisor);
  });
}

DatasetSplit load_paired_directory(const std::filesystem::path& root, double train_frac, int divisor) {
  std::vector<std::filesystem::path> originals;
  for (const auto& f : sorted_pngs(root / "original")) {
    if (std::filesystem::exists(root / "bokeh" / f.filename())) originals.push_back(f);
  }
  DatasetSplit split;
  split.train_count = split_point(originals.size(), train_frac);
  const size_t k = split.train_count;
  auto loader = [root, originals, divisor](size_t offset) {
    return [=](size_t i) {
      const auto& f = originals[offset + i];
      return load_pair(f, root / "bokeh" / f.filename(), std::nullopt, divisor);
    };
  };
  split.train = PairDataset(k, loader(0));
  split.eval = PairDataset(originals.size() - k, loader(k));
  return split;
}

}  // namespace ampn
