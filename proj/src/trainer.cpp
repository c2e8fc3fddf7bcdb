#include "ampn/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace ampn {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const NamedParams<float>& params) {
  if (state_.m.empty()) {
    for (const auto& [name, p] : params) {
      state_.m.emplace_back(p.shape());
      state_.v.emplace_back(p.shape());
    }
  }
  if (state_.m.size() != params.size()) throw std::logic_error("Adam state does not match the parameter list");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, t));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, t));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float lr = static_cast<float>(lr_), eps = static_cast<float>(eps_);
  for (size_t i = 0; i < params.size(); ++i) {
    Var<float> p = params[i].second;
    const auto& g = p.grad().array();
    auto& m = state_.m[i].array();
    auto& v = state_.v[i].array();
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    p.mutable_value().array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

std::vector<size_t> batch_indices(size_t n, int batch_size, std::uint64_t seed, std::int64_t step) {
  if (n == 0 || batch_size < 1) throw std::invalid_argument("batch_indices: empty dataset or batch");
  const size_t bs = std::min(static_cast<size_t>(batch_size), n);
  const std::int64_t per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::int64_t epoch = step / per_epoch;
  const size_t slot = static_cast<size_t>(step % per_epoch);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(sample_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  const size_t begin = slot * bs;
  return {order.begin() + begin, order.begin() + std::min(n, begin + bs)};
}

namespace {

struct Batch {
  TensorF input, target;
  std::optional<TensorF> region;
};

Batch make_batch(const PairDataset& data, const std::vector<size_t>& indices) {
  std::vector<TensorF> in, tg, rg;
  for (size_t i : indices) {
    ImagePair p = data.get(i);
    in.push_back(std::move(p.input));
    tg.push_back(std::move(p.target));
    if (p.gt_region) rg.push_back(std::move(*p.gt_region));
  }
  Batch b{stack(in), stack(tg), std::nullopt};
  if (rg.size() == indices.size()) b.region = stack(rg);
  return b;
}

ForwardOptions mask_options(const ModelConfig& config, const std::optional<TensorF>& region) {
  ForwardOptions o;
  if (!config.use_g1) {
    if (!region) throw ConfigError("a model without G1 needs gt_mask images as external masks");
    o.external_mask = *region;
  }
  return o;
}

}  // namespace

TrainResult train_model(const ModelConfig& config, const PairDataset& train, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  AmpnModel<float> model(config);
  Adam adam(config.train.learning_rate);
  std::int64_t step = 0;
  if (options.resume) {
    options.resume->apply_to(model);
    if (options.resume->optimizer) adam.set_state(*options.resume->optimizer);
    step = options.resume->training_step;
  }
  const PerceptualExtractor extractor = PerceptualExtractor::from_config(config);
  const NamedParams<float> params = model.parameters();

  const size_t bs = std::min(static_cast<size_t>(config.train.batch_size), train.size());
  const std::int64_t per_epoch = static_cast<std::int64_t>((train.size() + bs - 1) / bs);
  std::int64_t last = options.max_steps > 0            ? options.max_steps
                      : config.train.max_steps > 0      ? config.train.max_steps
                                                        : config.train.epochs * per_epoch;

  auto snapshot = [&](std::int64_t at) {
    Checkpoint ck = Checkpoint::from_model(model, at);
    ck.optimizer = adam.state();
    return ck;
  };

  TrainResult result;
  for (; step < last; ++step) {
    const Batch batch = make_batch(train, batch_indices(train.size(), config.train.batch_size, config.train.seed, step));
    const ForwardOptions fo = mask_options(config, batch.region);
    if (fo.external_mask && !(fo.external_mask->h() == batch.input.h() && fo.external_mask->w() == batch.input.w())) {
      throw ShapeError("gt_mask size does not match the training images");
    }
    model.zero_grad();
    const ForwardResult<float> fwd = model.forward(batch.input, fo);
    const LossTerms<float> loss = total_loss(fwd.b0, Var<float>(batch.target), config.loss_weights, extractor);
    const double total = loss.total.value().array()[0];
    if (!std::isfinite(total)) {
      throw DivergenceError("loss became non-finite at step " + std::to_string(step) + " (l1=" +
                            std::to_string(loss.l1) + ", perceptual=" + std::to_string(loss.perceptual) +
                            ", ssim_loss=" + std::to_string(loss.ssim_loss) + ")");
    }
    backward(loss.total);
    adam.step(params);

    const StepRecord rec{step, loss.l1, loss.perceptual, loss.ssim_loss, total};
    result.history.push_back(rec);
    if (options.on_step) options.on_step(rec);

    const std::int64_t done = step + 1;
    if (config.train.checkpoint_every > 0 && done % config.train.checkpoint_every == 0 &&
        !options.checkpoint_path.empty()) {
      snapshot(done).save(options.checkpoint_path);
    }
    if (config.train.eval_every > 0 && done % config.train.eval_every == 0 && !options.eval_set.empty()) {
      const MetricReport report = evaluate(model, options.eval_set, extractor);
      if (options.on_eval) options.on_eval(done, report);
    }
  }
  result.checkpoint = snapshot(step);
  if (!options.checkpoint_path.empty()) result.checkpoint.save(options.checkpoint_path);
  if (!options.history_path.empty()) write_history_csv(options.history_path, result.history);
  return result;
}

MetricReport evaluate(const AmpnModel<float>& model, const PairDataset& data, const PerceptualExtractor& extractor,
                      MetricMode mode) {
  MetricReport report;
  report.mode = mode;
  report.extractor_label = extractor.label();
  NoGradGuard no_grad;
  for (size_t i = 0; i < data.size(); ++i) {
    const ImagePair p = data.get(i);
    const int d = model.config().size_divisor();
    if (p.input.h() % d != 0 || p.input.w() % d != 0) {
      throw ShapeError("evaluation image " + p.name + " is not divisible by " + std::to_string(d));
    }
    const ForwardResult<float> fwd = model.forward(p.input, mask_options(model.config(), p.gt_region));
    report.add(p.name, fwd.b0.value(), p.target, extractor);
  }
  return report;
}

double mask_iou(const TensorF& mask, const TensorF& region, double threshold) {
  const TensorF m = resize_image(mask, region.h(), region.w());
  require_same_shape(m.shape(), region.shape(), "mask_iou");
  const auto pred = (m.array() > static_cast<float>(threshold));
  const auto gt = (region.array() > 0.5f);
  const double inter = (pred && gt).count();
  const double uni = (pred || gt).count();
  return uni == 0 ? 1.0 : inter / uni;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(9);
  out << "step,l1,perceptual,ssim_loss,total\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.l1 << ',' << r.perceptual << ',' << r.ssim_loss << ',' << r.total << '\n';
  }
}

}  // namespace ampn
