#include "tdconved/config.hpp"

#include <fstream>
#include <set>

#include "tdconved/errors.hpp"

namespace tdconved {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Parsed documents store non-negative integers as unsigned, while values
// built in code are signed.
bool is_non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

/// Reads the keys of one section, rejecting anything not consumed.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError("config: section '" + name + "' must be an object");
  }

  void get(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!is_non_negative_integer(*v)) throw ConfigError(where(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::uint64_t& out, int) {
    if (const json* v = find(key)) {
      if (!is_non_negative_integer(*v)) throw ConfigError(where(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }
  std::string where(const char* key) const { return "config: '" + name_ + "." + key + "'"; }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

void read_dims(Section& s, ModelDims& d) {
  s.get("vocab_size", d.vocab_size);
  s.get("feature_dim", d.feature_dim);
  s.get("encoder_dim", d.encoder_dim);
  s.get("decoder_dim", d.decoder_dim);
  s.get("attention_dim", d.attention_dim);
  s.get("embed_dim", d.embed_dim);
  s.get("kernel_size", d.kernel_size);
  s.get("encoder_blocks", d.encoder_blocks);
  s.get("decoder_blocks", d.decoder_blocks);
  s.get("max_length", d.max_length);
  std::string variant = variant_name(d.variant);
  s.get("variant", variant);
  d.variant = parse_variant(variant);
}

void check_positive(std::size_t value, const char* what) {
  if (value == 0) throw ConfigError(std::string("config: ") + what + " must be at least 1");
}

}  // namespace

ordered_json dims_to_json(const ModelDims& d) {
  ordered_json j;
  j["vocab_size"] = d.vocab_size;
  j["feature_dim"] = d.feature_dim;
  j["encoder_dim"] = d.encoder_dim;
  j["decoder_dim"] = d.decoder_dim;
  j["attention_dim"] = d.attention_dim;
  j["embed_dim"] = d.embed_dim;
  j["kernel_size"] = d.kernel_size;
  j["encoder_blocks"] = d.encoder_blocks;
  j["decoder_blocks"] = d.decoder_blocks;
  j["max_length"] = d.max_length;
  j["variant"] = variant_name(d.variant);
  return j;
}

ModelDims dims_from_json(const json& j) {
  const json root = {{"model", j}};
  Section s(root, "model");
  ModelDims d;
  read_dims(s, d);
  s.finish();
  return d;
}

ordered_json to_json(const Config& c) {
  ordered_json j;
  j["model"] = dims_to_json(c.model);
  j["model"].erase("vocab_size");
  j["data"] = {{"min_count", c.min_count}, {"frames", c.frames}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps}};
  j["training"] = {{"batch_size", c.batch_size}, {"epochs", c.epochs}, {"seed", c.seed}, {"threads", c.threads}};
  j["inference"] = {{"beam", c.beam}};
  j["synth"] = {{"samples", c.synth_samples},
                {"holdout", c.synth_holdout},
                {"vocab_size", c.synth_vocab},
                {"length", c.synth_length},
                {"noise", c.synth_noise}};
  j["paths"] = {{"data_dir", c.data_dir}, {"checkpoint", c.checkpoint}, {"vocab", c.vocab}, {"loss_log", c.loss_log}};
  return j;
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> sections = {"model",     "data",  "optimizer", "training",
                                                 "inference", "synth", "paths"};
  for (const auto& [key, value] : j.items()) {
    if (!sections.count(key)) throw ConfigError("config: unknown section '" + key + "'");
  }
  Config c;
  {
    Section s(j, "model");
    read_dims(s, c.model);
    s.finish();
  }
  {
    Section s(j, "data");
    s.get("min_count", c.min_count);
    s.get("frames", c.frames);
    s.finish();
  }
  {
    Section s(j, "optimizer");
    s.get("lr", c.optimizer.lr);
    s.get("beta1", c.optimizer.beta1);
    s.get("beta2", c.optimizer.beta2);
    s.get("eps", c.optimizer.eps);
    s.finish();
  }
  {
    Section s(j, "training");
    s.get("batch_size", c.batch_size);
    s.get("epochs", c.epochs);
    s.get("seed", c.seed, 0);
    s.get("threads", c.threads);
    s.finish();
  }
  {
    Section s(j, "inference");
    s.get("beam", c.beam);
    s.finish();
  }
  {
    Section s(j, "synth");
    s.get("samples", c.synth_samples);
    s.get("holdout", c.synth_holdout);
    s.get("vocab_size", c.synth_vocab);
    s.get("length", c.synth_length);
    s.get("noise", c.synth_noise);
    s.finish();
  }
  {
    Section s(j, "paths");
    s.get("data_dir", c.data_dir);
    s.get("checkpoint", c.checkpoint);
    s.get("vocab", c.vocab);
    s.get("loss_log", c.loss_log);
    s.finish();
  }
  validate(c);
  return c;
}

void merge_json(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object()) {
      merge_json(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j);
}

void validate(const Config& c) {
  const ModelDims& d = c.model;
  if (d.kernel_size % 2 == 0) {
    throw ConfigError("config: model.kernel_size must be odd (got " + std::to_string(d.kernel_size) + ")");
  }
  check_positive(d.feature_dim, "model.feature_dim");
  check_positive(d.encoder_dim, "model.encoder_dim");
  check_positive(d.decoder_dim, "model.decoder_dim");
  check_positive(d.attention_dim, "model.attention_dim");
  check_positive(d.embed_dim, "model.embed_dim");
  check_positive(d.decoder_blocks, "model.decoder_blocks");
  check_positive(d.max_length, "model.max_length");
  if (d.variant != Variant::MeanPool) check_positive(d.encoder_blocks, "model.encoder_blocks");
  check_positive(c.min_count, "data.min_count");
  check_positive(c.frames, "data.frames");
  check_positive(c.batch_size, "training.batch_size");
  check_positive(c.threads, "training.threads");
  check_positive(c.beam, "inference.beam");
  check_positive(c.synth_length, "synth.length");
  if (!(c.optimizer.lr >= 0.0)) throw ConfigError("config: optimizer.lr must be >= 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0)) throw ConfigError("config: optimizer.beta1 must be in [0, 1)");
  if (!(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) throw ConfigError("config: optimizer.beta2 must be in [0, 1)");
  if (!(c.optimizer.eps > 0.0)) throw ConfigError("config: optimizer.eps must be > 0");
  if (c.synth_vocab < kNumReserved + 1) throw ConfigError("config: synth.vocab_size must be at least 5");
  if (!(c.synth_noise >= 0.0)) throw ConfigError("config: synth.noise must be >= 0");
  if (c.synth_holdout > c.synth_samples) throw ConfigError("config: synth.holdout exceeds synth.samples");
}

TrainOptions train_options(const Config& c) {
  TrainOptions o;
  o.adam = c.optimizer;
  o.batch_size = c.batch_size;
  o.epochs = c.epochs;
  o.seed = c.seed;
  o.threads = c.threads;
  return o;
}

SynthOptions synth_options(const Config& c) {
  SynthOptions o;
  o.seed = c.seed;
  o.n_samples = c.synth_samples;
  o.vocab_size = c.synth_vocab;
  o.seq_len = c.synth_length;
  o.feature_dim = c.model.feature_dim;
  o.noise = c.synth_noise;
  return o;
}

}  // namespace tdconved
