#include "ampn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ampn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("bad number for " + key + ": '" + v + "'");
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

void BackboneSpec::validate() const {
  if (downsample_stages < 1) throw ConfigError("backbone needs at least one downsample stage");
  if (static_cast<int>(stage_widths.size()) != downsample_stages + 1) {
    throw ConfigError("backbone: stage_widths must have downsample_stages + 1 entries");
  }
  for (int w : stage_widths) {
    if (w < 1) throw ConfigError("backbone: widths must be positive");
  }
  if (blocks_per_stage < 1 || expansion < 1) throw ConfigError("backbone: invalid block settings");
  if (block_type != "inverted_residual") throw ConfigError("backbone: unknown block type " + block_type);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.base_width = 72;
  c.refine_width = 40;
  c.blocks_per_stage = 3;
  c.train.epochs = 500;
  c.train.batch_size = 8;
  c.train.image_height = 1024;
  c.train.image_width = 1536;
  return c;
}

BackboneSpec ModelConfig::generator_backbone() const {
  BackboneSpec s;
  s.downsample_stages = 3;
  const int w = base_width;
  s.stage_widths = {w, w + w / 2, 2 * w, 3 * w};
  s.blocks_per_stage = blocks_per_stage;
  s.expansion = expansion;
  return s;
}

BackboneSpec ModelConfig::refiner_backbone() const {
  BackboneSpec s;
  s.downsample_stages = 2;
  const int w = refine_width;
  s.stage_widths = {w, 2 * w, 3 * w};
  s.blocks_per_stage = 1;
  s.expansion = expansion;
  return s;
}

int ModelConfig::size_divisor() const {
  const int g = 1 << (pyramid_levels + generator_backbone().downsample_stages);
  const int r = 1 << (pyramid_levels - 1 + refiner_backbone().downsample_stages);
  return std::max(g, r);
}

void ModelConfig::validate() const {
  if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
  if (base_width < 1 || refine_width < 1) throw ConfigError("widths must be positive");
  if (attention_reduction < 1) throw ConfigError("attention_reduction must be positive");
  if (loss_weights.l1 < 0 || loss_weights.perceptual < 0 || loss_weights.ssim < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (train.epochs < 1 || train.batch_size < 1 || !(train.learning_rate > 0)) {
    throw ConfigError("training hyperparameters must be positive");
  }
  if (train.optimizer != "adam") throw ConfigError("unsupported optimizer " + train.optimizer);
  const int d = size_divisor();
  if (train.image_height % d != 0 || train.image_width % d != 0) {
    throw ConfigError("image size " + std::to_string(train.image_height) + "x" +
                      std::to_string(train.image_width) + " not divisible by " + std::to_string(d));
  }
  generator_backbone().validate();
  refiner_backbone().validate();
}

bool ModelConfig::architecture_matches(const ModelConfig& o) const {
  return pyramid_levels == o.pyramid_levels && base_width == o.base_width &&
         refine_width == o.refine_width && blocks_per_stage == o.blocks_per_stage &&
         expansion == o.expansion && attention_reduction == o.attention_reduction &&
         use_g1 == o.use_g1 && use_g2 == o.use_g2 && use_refinement == o.use_refinement &&
         use_dual_attention == o.use_dual_attention;
}

const std::vector<std::string>& ModelConfig::variant_names() {
  static const std::vector<std::string> names{"full", "wo_ref", "no_g2", "wo_att", "no_g1"};
  return names;
}

ModelConfig ModelConfig::variant(const std::string& name) const {
  ModelConfig c = *this;
  c.use_g1 = c.use_g2 = c.use_refinement = c.use_dual_attention = true;
  if (name == "full") return c;
  if (name == "wo_ref") c.use_refinement = false;
  else if (name == "no_g2") c.use_g2 = false;
  else if (name == "wo_att") c.use_dual_attention = false;
  else if (name == "no_g1") c.use_g1 = false;
  else throw ConfigError("unknown variant " + name);
  return c;
}

void ModelConfig::set(const std::string& key, const std::string& v) {
  if (key == "pyramid_levels") pyramid_levels = parse_int<int>(key, v);
  else if (key == "base_width") base_width = parse_int<int>(key, v);
  else if (key == "refine_width") refine_width = parse_int<int>(key, v);
  else if (key == "blocks_per_stage") blocks_per_stage = parse_int<int>(key, v);
  else if (key == "expansion") expansion = parse_int<int>(key, v);
  else if (key == "attention_reduction") attention_reduction = parse_int<int>(key, v);
  else if (key == "use_g1") use_g1 = parse_bool(key, v);
  else if (key == "use_g2") use_g2 = parse_bool(key, v);
  else if (key == "use_refinement") use_refinement = parse_bool(key, v);
  else if (key == "use_dual_attention") use_dual_attention = parse_bool(key, v);
  else if (key == "w_l1") loss_weights.l1 = parse_double(key, v);
  else if (key == "w_perceptual") loss_weights.perceptual = parse_double(key, v);
  else if (key == "w_ssim") loss_weights.ssim = parse_double(key, v);
  else if (key == "init_seed") init_seed = parse_int<std::uint64_t>(key, v);
  else if (key == "extractor_seed") extractor_seed = parse_int<std::uint64_t>(key, v);
  else if (key == "extractor_weights") extractor_weights = v;
  else if (key == "epochs") train.epochs = parse_int<int>(key, v);
  else if (key == "batch_size") train.batch_size = parse_int<int>(key, v);
  else if (key == "learning_rate") train.learning_rate = parse_double(key, v);
  else if (key == "optimizer") train.optimizer = v;
  else if (key == "image_height") train.image_height = parse_int<int>(key, v);
  else if (key == "image_width") train.image_width = parse_int<int>(key, v);
  else if (key == "seed") train.seed = parse_int<std::uint64_t>(key, v);
  else if (key == "eval_every") train.eval_every = parse_int<int>(key, v);
  else if (key == "checkpoint_every") train.checkpoint_every = parse_int<int>(key, v);
  else if (key == "max_steps") train.max_steps = parse_int<int>(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  auto b = [](bool x) { return x ? "1" : "0"; };
  os << "pyramid_levels=" << pyramid_levels << "\n"
     << "base_width=" << base_width << "\n"
     << "refine_width=" << refine_width << "\n"
     << "blocks_per_stage=" << blocks_per_stage << "\n"
     << "expansion=" << expansion << "\n"
     << "attention_reduction=" << attention_reduction << "\n"
     << "use_g1=" << b(use_g1) << "\n"
     << "use_g2=" << b(use_g2) << "\n"
     << "use_refinement=" << b(use_refinement) << "\n"
     << "use_dual_attention=" << b(use_dual_attention) << "\n"
     << "w_l1=" << fmt_double(loss_weights.l1) << "\n"
     << "w_perceptual=" << fmt_double(loss_weights.perceptual) << "\n"
     << "w_ssim=" << fmt_double(loss_weights.ssim) << "\n"
     << "init_seed=" << init_seed << "\n"
     << "extractor_seed=" << extractor_seed << "\n"
     << "extractor_weights=" << extractor_weights << "\n"
     << "epochs=" << train.epochs << "\n"
     << "batch_size=" << train.batch_size << "\n"
     << "learning_rate=" << fmt_double(train.learning_rate) << "\n"
     << "optimizer=" << train.optimizer << "\n"
     << "image_height=" << train.image_height << "\n"
     << "image_width=" << train.image_width << "\n"
     << "seed=" << train.seed << "\n"
     << "eval_every=" << train.eval_every << "\n"
     << "checkpoint_every=" << train.checkpoint_every << "\n"
     << "max_steps=" << train.max_steps << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config " + path.string());
  f << to_text();
}

}  // namespace ampn
