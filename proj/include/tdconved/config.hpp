#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tdconved/adam.hpp"
#include "tdconved/data.hpp"
#include "tdconved/model.hpp"
#include "tdconved/train.hpp"

namespace tdconved {

/// Everything a CLI run needs. Serialised as a JSON object with sections
/// "model", "data", "optimizer", "training", "inference", "synth" and
/// "paths"; every key is optional and unknown keys are rejected.
struct Config {
  ModelDims model;  // vocab_size is filled in from the vocabulary
  std::size_t min_count = 1;
  std::size_t frames = 25;  // N_v used when features are generated (bench)
  AdamConfig optimizer;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t beam = 5;
  // Synthetic copy task.
  std::size_t synth_samples = 100;
  std::size_t synth_holdout = 0;
  std::size_t synth_vocab = 20;
  std::size_t synth_length = 8;
  double synth_noise = 0.1;
  // Paths; empty means unset.
  std::string data_dir;
  std::string checkpoint;
  std::string vocab;
  std::string loss_log;
};

nlohmann::ordered_json to_json(const Config& config);
/// Starts from the defaults and applies every key present. Throws
/// ConfigError on unknown keys, wrong types or values that fail validate().
Config config_from_json(const nlohmann::json& json);
/// Recursive merge: objects merge key by key, anything else replaces.
void merge_json(nlohmann::json& base, const nlohmann::json& patch);
Config load_config(const std::filesystem::path& path);

/// Rejects even k, zero dimensions, zero batch size and similar.
void validate(const Config& config);

nlohmann::ordered_json dims_to_json(const ModelDims& dims);
ModelDims dims_from_json(const nlohmann::json& json);

TrainOptions train_options(const Config& config);
SynthOptions synth_options(const Config& config);

}  // namespace tdconved
