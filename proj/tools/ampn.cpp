// ampn command line: render, train, eval, synth and serve.
//
// Exit codes: 0 success, 1 bad arguments, 2 missing or unreadable files,
// 3 shape / configuration / checkpoint mismatch, 4 training or runtime failure.

#include "ampn/render.hpp"
#include "ampn/service.hpp"
#include "ampn/trainer.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace ampn;

namespace {

constexpr int kBadArgs = 1;
constexpr int kMissingFile = 2;
constexpr int kMismatch = 3;
constexpr int kRuntime = 4;

struct Common {
  std::string in, out, ckpt, config;
  std::optional<std::uint64_t> seed;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw RequestError(std::string("missing --") + what);
  if (!fs::exists(path)) throw IoError(IoError::Kind::kMissingFile, std::string(what) + " not found: " + path);
}

ModelConfig load_config(const Common& c) {
  ModelConfig cfg = c.config.empty() ? ModelConfig::desk() : (require_file(c.config, "config"), ModelConfig::load(c.config));
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.init_seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

Checkpoint load_checkpoint(const Common& c) {
  require_file(c.ckpt, "ckpt");
  if (c.config.empty()) return Checkpoint::load(c.ckpt);
  return Checkpoint::load(c.ckpt, load_config(c));
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::optional<std::string> mask, dump_mask;
  std::optional<double> background_level;
  double focus_threshold = 0.8;
};

void run_render(const Common& c, const RenderArgs& a) {
  if (c.out.empty()) throw RequestError("missing --out");
  require_file(c.in, "in");
  const Checkpoint ck = load_checkpoint(c);
  RenderRequest req;
  req.image = load_image(c.in).tensor();
  if (a.mask) {
    require_file(*a.mask, "mask");
    req.mask = load_mask(*a.mask).tensor();
  }
  req.background_level = a.background_level;
  req.focus_threshold = a.focus_threshold;

  const Renderer renderer(ck);
  const RenderResult res = renderer.render(req);
  if (res.resized) {
    std::cerr << "resized input " << res.input_height << "x" << res.input_width << " -> " << res.image.h() << "x"
              << res.image.w() << " (multiple of " << renderer.config().size_divisor() << ")\n";
  }
  write_file(c.out, encode_png(res.image));
  if (a.dump_mask) write_file(*a.dump_mask, encode_png(res.mask));
  std::cerr << "mask source: " << mask_source_name(res.source) << "\n";
}

// ---------------------------------------------------------------------------

struct DataArgs {
  std::size_t samples = 288;
  double train_frac = 256.0 / 288.0;
};

DatasetSplit open_dataset(const Common& c, const DataArgs& d, const ModelConfig& cfg) {
  const int divisor = cfg.size_divisor();
  if (c.in.empty()) {
    SynthOptions so;
    so.height = cfg.train.image_height;
    so.width = cfg.train.image_width;
    return make_dataset(d.samples, cfg.train.seed, d.train_frac, so);
  }
  const fs::path root = c.in;
  if (!fs::is_directory(root)) throw IoError(IoError::Kind::kMissingFile, "dataset directory not found: " + c.in);
  if (fs::is_directory(root / "original")) return load_paired_directory(root, d.train_frac, divisor);
  DatasetSplit split;
  split.train = load_split(root, "train", divisor);
  if (fs::is_directory(root / "eval")) split.eval = load_split(root, "eval", divisor);
  split.train_count = split.train.size();
  return split;
}

struct TrainArgs {
  std::int64_t steps = 0;
  std::string resume;
  int log_every = 10;
};

void run_train(const Common& c, const DataArgs& d, const TrainArgs& t) {
  if (c.ckpt.empty()) throw RequestError("missing --ckpt (output checkpoint path)");
  ModelConfig cfg = load_config(c);
  TrainOptions opt;
  opt.max_steps = t.steps;
  opt.checkpoint_path = c.ckpt;
  if (!c.out.empty()) opt.history_path = c.out;
  if (!t.resume.empty()) {
    require_file(t.resume, "resume");
    opt.resume = Checkpoint::load(t.resume, cfg);
  }
  const DatasetSplit split = open_dataset(c, d, cfg);
  opt.eval_set = split.eval;
  opt.on_step = [&t](const StepRecord& r) {
    if (t.log_every > 0 && r.step % t.log_every == 0) {
      std::fprintf(stderr, "step %lld  total %.5f  l1 %.5f  perceptual %.5f  ssim_loss %.5f\n",
                   static_cast<long long>(r.step), r.total, r.l1, r.perceptual, r.ssim_loss);
    }
  };
  opt.on_eval = [](std::int64_t step, const MetricReport& rep) {
    std::fprintf(stderr, "eval @%lld  %s\n", static_cast<long long>(step), rep.table_row().c_str());
  };
  const TrainResult res = train_model(cfg, split.train.cached(), opt);
  std::cerr << "wrote " << c.ckpt << " after " << res.checkpoint.training_step << " steps\n";
}

// ---------------------------------------------------------------------------

void run_eval(const Common& c, const DataArgs& d, bool quantized) {
  const Checkpoint ck = load_checkpoint(c);
  const AmpnModel<float> model = ck.instantiate();
  Common data = c;
  const DatasetSplit split = open_dataset(data, d, ck.config);
  const PairDataset& set = split.eval.empty() ? split.train : split.eval;
  const MetricReport report = evaluate(model, set, PerceptualExtractor::from_config(ck.config),
                                       quantized ? MetricMode::kQuantized8 : MetricMode::kFloat);
  if (!c.out.empty()) {
    const std::string tsv = report.to_tsv();
    write_file(c.out, std::vector<std::uint8_t>(tsv.begin(), tsv.end()));
  }
  std::cout << report.table_row() << "\n";
  std::cerr << "extractor: " << report.extractor_label << ", images: " << report.size() << "\n";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  double sigma_lo = 2.0, sigma_hi = 4.0;
};

void run_synth(const Common& c, const DataArgs& d, const SynthArgs& s) {
  if (c.out.empty()) throw RequestError("missing --out (dataset root)");
  const ModelConfig cfg = load_config(c);
  SynthOptions so;
  so.height = cfg.train.image_height;
  so.width = cfg.train.image_width;
  so.sigma_lo = s.sigma_lo;
  so.sigma_hi = s.sigma_hi;
  write_dataset(c.out, d.samples, cfg.train.seed, d.train_frac, so);
  std::cerr << "wrote " << d.samples << " samples to " << c.out << "\n";
}

// ---------------------------------------------------------------------------

BokehService* g_service = nullptr;

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

void run_serve(const Common& c, const ServeArgs& s) {
  std::shared_ptr<const Renderer> renderer;
  std::string hash;
  if (!c.ckpt.empty()) {
    renderer = std::make_shared<const Renderer>(load_checkpoint(c));
    hash = checkpoint_hash(c.ckpt);
  }
  ServiceOptions opt;
  opt.static_dir = s.static_dir;
  BokehService service(renderer, hash, opt);
  const int port = service.bind(s.host, s.port);
  if (port < 0) throw std::runtime_error("cannot bind " + s.host + ":" + std::to_string(s.port));
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "listening on http://" << s.host << ":" << port << (renderer ? "" : " (no model loaded)") << "\n";
  service.serve();
  g_service = nullptr;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "ampn: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AMPN mask-guided bokeh rendering"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--in", common.in, "Input image or dataset directory");
    sub->add_option("--out", common.out, "Output file or directory");
    sub->add_option("--ckpt", common.ckpt, "Checkpoint file");
    sub->add_option("--config", common.config, "key=value configuration file");
    sub->add_option("--seed", common.seed, "Seed for data order, initialisation and synthesis");
  };

  RenderArgs ra;
  CLI::App* render = app.add_subcommand("render", "Render bokeh for one image");
  add_common(render);
  render->add_option("--mask", ra.mask, "Focus mask PNG (bypasses G1)");
  render->add_option("--background-level", ra.background_level, "Background mask intensity in [0,1)");
  render->add_option("--focus-threshold", ra.focus_threshold, "Mask values at or above this are in focus")
      ->capture_default_str();
  render->add_option("--dump-mask", ra.dump_mask, "Write the focus mask used to this PNG");

  DataArgs da;
  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a model (synthetic data unless --in is given)");
  add_common(train);
  train->add_option("--steps", ta.steps, "Stop after this many optimizer steps");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_option("--samples", da.samples, "Synthetic dataset size")->capture_default_str();
  train->add_option("--train-frac", da.train_frac, "Leading fraction used for training")->capture_default_str();
  train->add_option("--log-every", ta.log_every, "Print the loss every N steps")->capture_default_str();

  bool quantized = false;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  eval->add_flag("--quantized", quantized, "Quantize to 8 bits before computing metrics");
  eval->add_option("--samples", da.samples, "Synthetic dataset size when --in is absent")->capture_default_str();
  eval->add_option("--train-frac", da.train_frac, "Leading fraction reserved for training")->capture_default_str();

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  add_common(synth);
  synth->add_option("--samples", da.samples, "Number of samples")->capture_default_str();
  synth->add_option("--train-frac", da.train_frac, "Leading fraction written to train/")->capture_default_str();
  synth->add_option("--sigma-lo", sa.sigma_lo, "Smallest background blur sigma")->capture_default_str();
  synth->add_option("--sigma-hi", sa.sigma_hi, "Largest background blur sigma")->capture_default_str();

  ServeArgs sv;
  CLI::App* serve = app.add_subcommand("serve", "Run the HTTP service");
  add_common(serve);
  serve->add_option("--host", sv.host)->capture_default_str();
  serve->add_option("--port", sv.port)->capture_default_str();
  serve->add_option("--static", sv.static_dir, "Directory of UI assets served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadArgs;
  }

  try {
    if (render->parsed()) run_render(common, ra);
    else if (train->parsed()) run_train(common, da, ta);
    else if (eval->parsed()) run_eval(common, da, quantized);
    else if (synth->parsed()) run_synth(common, da, sa);
    else if (serve->parsed()) run_serve(common, sv);
  } catch (const RequestError& e) {
    return report("bad arguments", e, kBadArgs);
  } catch (const IoError& e) {
    return report("file error", e, kMissingFile);
  } catch (const ArchiveError& e) {
    return report("invalid checkpoint", e, kMismatch);
  } catch (const DivergenceError& e) {
    return report("training diverged", e, kRuntime);
  } catch (const std::invalid_argument& e) {
    // ShapeError, ConfigError, CheckpointMismatch
    return report("mismatch", e, kMismatch);
  } catch (const std::exception& e) {
    return report("error", e, kRuntime);
  }
  return 0;
}
