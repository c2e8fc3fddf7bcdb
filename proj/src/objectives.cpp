#include "ampn/objectives.hpp"

#include "ampn/image.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace ampn {

template <typename Scalar>
Var<Scalar> l1_loss(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "l1_loss");
  return mean(abs(sub(a, b)));
}

const std::vector<double>& ssim_window() {
  static const std::vector<double> window = [] {
    std::vector<double> g(11);
    double total = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
  }();
  return window;
}

template <typename Scalar>
Var<Scalar> ssim(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape s = a.shape();
  const int k = static_cast<int>(ssim_window().size());
  if (s.h < k || s.w < k) throw ShapeError("ssim: image " + s.str() + " smaller than the 11x11 window");
  const LinearMap1D along_h = LinearMap1D::filter_valid(s.h, ssim_window());
  const LinearMap1D along_w = LinearMap1D::filter_valid(s.w, ssim_window());
  auto blur = [&](const Var<Scalar>& x) { return resample(x, along_h, along_w); };

  Var<Scalar> mu_a = blur(a), mu_b = blur(b);
  Var<Scalar> mu_aa = mul(mu_a, mu_a), mu_bb = mul(mu_b, mu_b), mu_ab = mul(mu_a, mu_b);
  Var<Scalar> var_a = sub(blur(mul(a, a)), mu_aa);
  Var<Scalar> var_b = sub(blur(mul(b, b)), mu_bb);
  Var<Scalar> cov = sub(blur(mul(a, b)), mu_ab);

  const Scalar c1 = static_cast<Scalar>(kSsimC1), c2 = static_cast<Scalar>(kSsimC2);
  Var<Scalar> num = mul(affine(mu_ab, Scalar(2), c1), affine(cov, Scalar(2), c2));
  Var<Scalar> den = mul(affine(add(mu_aa, mu_bb), Scalar(1), c1), affine(add(var_a, var_b), Scalar(1), c2));
  return mean(div(num, den));
}

// ---------------------------------------------------------------------------

PerceptualExtractor::PerceptualExtractor(std::vector<Stage> stages, std::string label)
    : stages_(std::move(stages)), label_(std::move(label)) {
  if (stages_.empty()) throw ConfigError("perceptual extractor needs at least one stage");
  int in = 3;
  for (size_t i = 0; i < stages_.size(); ++i) {
    const Stage& st = stages_[i];
    const Shape ws = st.weight.shape();
    if (ws.c != in || ws.h != 3 || ws.w != 3 || !(st.bias.shape() == Shape{1, ws.n, 1, 1}) ||
        !(st.lin.shape() == Shape{1, ws.n, 1, 1}) || st.stride < 1) {
      throw ConfigError("perceptual extractor stage " + std::to_string(i) + " has inconsistent shapes");
    }
    if ((st.lin.array() < 0).any()) throw ConfigError("perceptual channel weights must be non-negative");
    in = ws.n;
  }
}

PerceptualExtractor PerceptualExtractor::random(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Stage> stages;
  const int widths[] = {3, 8, 16, 32};
  const int strides[] = {1, 2, 2};
  for (int i = 0; i < 3; ++i) {
    Stage st;
    st.weight = TensorF(Shape{widths[i + 1], widths[i], 3, 3});
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (widths[i] * 9.0)));
    for (Eigen::Index j = 0; j < st.weight.size(); ++j) st.weight.array()[j] = static_cast<float>(dist(rng));
    st.bias = TensorF(Shape{1, widths[i + 1], 1, 1});
    st.lin = TensorF(Shape{1, widths[i + 1], 1, 1}, 1.0f);
    st.stride = strides[i];
    stages.push_back(std::move(st));
  }
  return PerceptualExtractor(std::move(stages), "random-seed" + std::to_string(seed));
}

PerceptualExtractor PerceptualExtractor::load(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  if (a.kind != "extractor") throw ArchiveError(path.string() + " is a '" + a.kind + "' container, not an extractor");
  const int n = std::stoi(a.meta_at("stages"));
  std::vector<Stage> stages;
  for (int i = 0; i < n; ++i) {
    const std::string p = "stage" + std::to_string(i);
    const TensorF* w = a.find(p + ".weight");
    const TensorF* b = a.find(p + ".bias");
    if (!w || !b) throw ArchiveError("extractor lacks " + p + " weights");
    Stage st;
    st.weight = *w;
    st.bias = *b;
    const TensorF* lin = a.find(p + ".lin");
    st.lin = lin ? *lin : TensorF(Shape{1, w->n(), 1, 1}, 1.0f);
    st.stride = std::stoi(a.meta_at(p + ".stride"));
    stages.push_back(std::move(st));
  }
  auto label = a.meta.find("label");
  return PerceptualExtractor(std::move(stages), label != a.meta.end() ? label->second : path.filename().string());
}

PerceptualExtractor PerceptualExtractor::from_config(const ModelConfig& config) {
  if (!config.extractor_weights.empty()) return load(config.extractor_weights);
  return random(config.extractor_seed);
}

void PerceptualExtractor::save(const std::filesystem::path& path) const {
  Archive a;
  a.kind = "extractor";
  a.meta["label"] = label_;
  a.meta["stages"] = std::to_string(stages_.size());
  for (size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "stage" + std::to_string(i);
    a.meta[p + ".stride"] = std::to_string(stages_[i].stride);
    a.tensors.emplace_back(p + ".weight", stages_[i].weight);
    a.tensors.emplace_back(p + ".bias", stages_[i].bias);
    a.tensors.emplace_back(p + ".lin", stages_[i].lin);
  }
  a.save(path);
}

template <typename Scalar>
std::vector<Var<Scalar>> PerceptualExtractor::features(const Var<Scalar>& x) const {
  if (x.shape().c != 3) throw ShapeError("perceptual extractor expects 3 channels, got " + x.shape().str());
  std::vector<Var<Scalar>> out;
  Var<Scalar> y = affine(x, Scalar(2), Scalar(-1));
  for (const Stage& st : stages_) {
    Var<Scalar> w(st.weight.cast<Scalar>()), b(st.bias.cast<Scalar>());
    y = relu(conv2d(y, w, b, Conv2dOptions{st.stride, 1, 1}));
    out.push_back(y);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> PerceptualExtractor::distance(const Var<Scalar>& a, const Var<Scalar>& b) const {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  const auto fa = features(a);
  const auto fb = features(b);
  Var<Scalar> total;
  for (size_t i = 0; i < stages_.size(); ++i) {
    Var<Scalar> d = square(sub(channel_normalize(fa[i], Scalar(1e-10)), channel_normalize(fb[i], Scalar(1e-10))));
    Var<Scalar> weighted = mul(d, Var<Scalar>(stages_[i].lin.cast<Scalar>()));
    // Channel sum then spatial mean equals C times the mean over every element.
    Var<Scalar> term = affine(mean(weighted), static_cast<Scalar>(d.shape().c), Scalar(0));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& b0, const Var<Scalar>& target, const LossWeights& w,
                             const PerceptualExtractor& extractor) {
  require_same_shape(b0.shape(), target.shape(), "total_loss");
  Var<Scalar> l1 = l1_loss(b0, target);
  Var<Scalar> perceptual = extractor.distance(b0, target);
  Var<Scalar> ssim_term = affine(ssim(b0, target), Scalar(-1), Scalar(1));
  LossTerms<Scalar> out;
  out.l1 = static_cast<double>(l1.value().array()[0]);
  out.perceptual = static_cast<double>(perceptual.value().array()[0]);
  out.ssim_loss = static_cast<double>(ssim_term.value().array()[0]);
  out.total = add(add(affine(l1, static_cast<Scalar>(w.l1), Scalar(0)),
                      affine(perceptual, static_cast<Scalar>(w.perceptual), Scalar(0))),
                  affine(ssim_term, static_cast<Scalar>(w.ssim), Scalar(0)));
  return out;
}

double psnr(const TensorF& a, const TensorF& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  const double mse = (a.array().cast<double>() - b.array().cast<double>()).square().mean();
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------------

namespace {

TensorF quantized(const TensorF& x) {
  TensorF out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.array()[i] = quantize8(out.array()[i]) / 255.0f;
  return out;
}

double average(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

void MetricReport::add(const std::string& name, const TensorF& prediction, const TensorF& target,
                       const PerceptualExtractor& extractor) {
  const TensorF p = mode == MetricMode::kQuantized8 ? quantized(prediction) : prediction;
  const TensorF t = mode == MetricMode::kQuantized8 ? quantized(target) : target;
  NoGradGuard no_grad;
  Var<double> pd(p.cast<double>()), td(t.cast<double>());
  names.push_back(name);
  psnr.push_back(ampn::psnr(p, t));
  ssim.push_back(ampn::ssim(pd, td).value().array()[0]);
  perceptual.push_back(extractor.distance(pd, td).value().array()[0]);
  if (extractor_label.empty()) extractor_label = extractor.label();
}

double MetricReport::mean_psnr() const { return average(psnr); }
double MetricReport::mean_ssim() const { return average(ssim); }
double MetricReport::mean_perceptual() const { return average(perceptual); }

std::string MetricReport::to_tsv() const {
  std::ostringstream os;
  os << "# extractor=" << extractor_label << " mode=" << (mode == MetricMode::kQuantized8 ? "quantized8" : "float")
     << "\n";
  os << "image\tPSNR\tSSIM\tLPIPS\n";
  for (size_t i = 0; i < names.size(); ++i) {
    os << names[i] << '\t' << fixed(psnr[i], 4) << '\t' << fixed(ssim[i], 6) << '\t' << fixed(perceptual[i], 6)
       << '\n';
  }
  os << "mean\t" << fixed(mean_psnr(), 4) << '\t' << fixed(mean_ssim(), 6) << '\t' << fixed(mean_perceptual(), 6)
     << '\n';
  return os.str();
}

std::string MetricReport::table_row(const std::string& method) const {
  return method + " & " + fixed(mean_psnr(), 2) + " & " + fixed(mean_ssim(), 4) + " & " + fixed(mean_perceptual(), 4);
}

#define AMPN_INSTANTIATE_OBJECTIVES(T)                                                                  \
  template Var<T> l1_loss<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> ssim<T>(const Var<T>&, const Var<T>&);                                                \
  template std::vector<Var<T>> PerceptualExtractor::features<T>(const Var<T>&) const;                   \
  template Var<T> PerceptualExtractor::distance<T>(const Var<T>&, const Var<T>&) const;                 \
  template LossTerms<T> total_loss<T>(const Var<T>&, const Var<T>&, const LossWeights&,                 \
                                      const PerceptualExtractor&);

AMPN_INSTANTIATE_OBJECTIVES(float)
AMPN_INSTANTIATE_OBJECTIVES(double)

}  // namespace ampn
