#include "ampn/checkpoint.hpp"

#include "ampn/image.hpp"

namespace ampn {

namespace {

constexpr const char* kParamPrefix = "param/";
constexpr const char* kMomentPrefix = "adam.m/";
constexpr const char* kVelocityPrefix = "adam.v/";

}  // namespace

Checkpoint Checkpoint::from_model(const AmpnModel<float>& model, std::int64_t step) {
  Checkpoint ck;
  ck.config = model.config();
  ck.training_step = step;
  for (const auto& [group, params] : model.parameter_groups()) {
    for (const auto& [name, p] : params) ck.parameters.push_back({group, name, p.value()});
  }
  return ck;
}

void Checkpoint::apply_to(AmpnModel<float>& model) const {
  if (!config.architecture_matches(model.config())) {
    throw CheckpointMismatch("checkpoint architecture does not match the model configuration");
  }
  NamedParams<float> params = model.parameters();
  if (params.size() != parameters.size()) {
    throw CheckpointMismatch("checkpoint holds " + std::to_string(parameters.size()) + " tensors, model has " +
                             std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, var] = params[i];
    if (name != parameters[i].name || !(var.shape() == parameters[i].value.shape())) {
      throw CheckpointMismatch("checkpoint tensor " + parameters[i].name + " " + parameters[i].value.shape().str() +
                               " does not fit model tensor " + name + " " + var.shape().str());
    }
  }
  for (size_t i = 0; i < params.size(); ++i) params[i].second.mutable_value() = parameters[i].value;
}

AmpnModel<float> Checkpoint::instantiate() const {
  AmpnModel<float> model(config);
  apply_to(model);
  return model;
}

Archive Checkpoint::to_archive() const {
  Archive a;
  a.kind = "checkpoint";
  a.meta["format_version"] = std::to_string(format_version);
  a.meta["config"] = config.to_text();
  a.meta["training_step"] = std::to_string(training_step);
  for (const Entry& e : parameters) a.tensors.emplace_back(kParamPrefix + e.group + "/" + e.name, e.value);
  if (optimizer) {
    if (optimizer->m.size() != parameters.size() || optimizer->v.size() != parameters.size()) {
      throw CheckpointMismatch("optimizer state does not match the parameter list");
    }
    a.meta["adam_step"] = std::to_string(optimizer->step);
    for (size_t i = 0; i < parameters.size(); ++i) {
      a.tensors.emplace_back(kMomentPrefix + parameters[i].name, optimizer->m[i]);
      a.tensors.emplace_back(kVelocityPrefix + parameters[i].name, optimizer->v[i]);
    }
  }
  return a;
}

Checkpoint Checkpoint::from_archive(const Archive& a) {
  if (a.kind != "checkpoint") throw ArchiveError("container holds '" + a.kind + "', not a checkpoint");
  Checkpoint ck;
  ck.format_version = static_cast<std::uint32_t>(std::stoul(a.meta_at("format_version")));
  if (ck.format_version != kFormatVersion) {
    throw ArchiveError("unsupported checkpoint format " + std::to_string(ck.format_version));
  }
  ck.config = ModelConfig::from_text(a.meta_at("config"));
  ck.training_step = std::stoll(a.meta_at("training_step"));
  const std::string pp = kParamPrefix;
  for (const auto& [key, t] : a.tensors) {
    if (key.rfind(pp, 0) != 0) continue;
    const std::string rest = key.substr(pp.size());
    const auto slash = rest.find('/');
    if (slash == std::string::npos) throw ArchiveError("malformed parameter key " + key);
    ck.parameters.push_back({rest.substr(0, slash), rest.substr(slash + 1), t});
  }
  if (a.meta.count("adam_step")) {
    AdamState st;
    st.step = std::stoll(a.meta_at("adam_step"));
    for (const Entry& e : ck.parameters) {
      const TensorF* m = a.find(kMomentPrefix + e.name);
      const TensorF* v = a.find(kVelocityPrefix + e.name);
      if (!m || !v) throw ArchiveError("optimizer state missing for " + e.name);
      st.m.push_back(*m);
      st.v.push_back(*v);
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { to_archive().save(path); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return from_archive(Archive::load(path)); }

Checkpoint Checkpoint::load(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load(path);
  if (!ck.config.architecture_matches(expected)) {
    throw CheckpointMismatch(path.string() + " was trained with a different architecture");
  }
  return ck;
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return hash_hex(fnv1a64(std::string(bytes.begin(), bytes.end())));
}

}  // namespace ampn
