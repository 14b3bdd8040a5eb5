#include "tdconved/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tdconved/checkpoint.hpp"
#include "tdconved/errors.hpp"
#include "tdconved/parallel.hpp"
#include "tdconved/search.hpp"
#include "tdconved/train.hpp"

namespace tdconved {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return 3;
    case ErrorCategory::Format: return 4;
    case ErrorCategory::Io: return 5;
    case ErrorCategory::Shape: return 6;
    case ErrorCategory::Index: return 7;
    case ErrorCategory::Capacity: return 8;
    case ErrorCategory::Contract: return 9;
  }
  return 1;
}

fs::path vocab_path_for(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p += ".vocab";
  return p;
}

namespace {

Vocabulary load_vocab_checked(const fs::path& vocab, const Checkpoint& ck) {
  const Vocabulary v = Vocabulary::load(vocab);
  if (v.hash() != ck.vocab_hash) {
    throw ConfigError("vocabulary " + vocab.string() + " does not match the checkpoint (hash mismatch)");
  }
  if (v.size() != ck.params.dims.vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(v.size()) + " does not match the checkpoint");
  }
  return v;
}

void ensure_parent(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

std::ofstream open_output(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void cmd_synth(const Config& config, const fs::path& out_dir) {
  if (out_dir.empty()) throw ConfigError("synth: no output directory (set --out or paths.data_dir)");
  const SynthDataset data = synth_copy_task(synth_options(config));
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "features").string() + ": " + ec.message());
  for (const auto& [id, features] : data.features) write_tdfe(out_dir / "features" / (id + ".tdfe"), features);

  const std::size_t n_train = config.synth_samples - config.synth_holdout;
  write_captions(out_dir / "train.jsonl", {data.captions.begin(), data.captions.begin() + n_train});
  write_captions(out_dir / "test.jsonl", {data.captions.begin() + n_train, data.captions.end()});
  synth_vocabulary(data).save(out_dir / "vocab.txt");
}

void cmd_train(const Config& config, const TrainPaths& paths, std::ostream& log) {
  if (paths.checkpoint.empty()) throw ConfigError("train: no checkpoint path (set --checkpoint)");
  const auto records = read_captions(paths.captions);
  if (records.empty()) throw ConfigError("train: no captions in " + paths.captions.string());
  const auto features = load_features(paths.features);

  Vocabulary vocab;
  if (!paths.vocab.empty() && fs::exists(paths.vocab)) {
    vocab = Vocabulary::load(paths.vocab);
  } else {
    std::vector<std::string> captions;
    for (const auto& r : records) captions.push_back(r.caption);
    vocab = build_vocab(captions, config.min_count);
    if (!paths.vocab.empty()) vocab.save(paths.vocab);
  }
  const auto data = make_examples(records, features, vocab);

  ModelDims dims = config.model;
  dims.vocab_size = vocab.size();
  dims.feature_dim = data.front().features.cols();
  for (const auto& ex : data) {
    if (ex.features.cols() != dims.feature_dim) {
      throw ShapeError("train: video '" + ex.video_id + "' has feature dimension " +
                       std::to_string(ex.features.cols()) + ", expected " + std::to_string(dims.feature_dim));
    }
    if (ex.caption.size() + 1 > dims.max_length) {
      throw CapacityError("train: caption of '" + ex.video_id + "' needs " + std::to_string(ex.caption.size() + 1) +
                          " steps, model.max_length is " + std::to_string(dims.max_length));
    }
  }

  Config echo = config;
  echo.model = dims;
  const std::string config_json = to_json(echo).dump();
  ensure_parent(paths.checkpoint);
  vocab.save(vocab_path_for(paths.checkpoint));

  log << "# samples=" << data.size() << " vocab=" << vocab.size() << " parameters="
      << parameter_count(make_model(dims, config.seed)) << "\n";
  const auto on_epoch = [&](const EpochRecord& r, const ModelParams& params) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.17g tokens=%zu steps=%zu\n", r.epoch, r.loss, r.tokens,
                  r.steps);
    log << buf;
    std::snprintf(buf, sizeof buf, "# epoch=%zu seconds=%.3f\n", r.epoch, r.seconds);
    log << buf << std::flush;
    save_checkpoint(paths.checkpoint, params, config_json, vocab.hash());
  };
  train(make_model(dims, config.seed), data, train_options(config), on_epoch);
}

EvalReport cmd_eval(const Config& config, const fs::path& checkpoint, const fs::path& captions,
                    const fs::path& features, const fs::path& vocab) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Vocabulary v = load_vocab_checked(vocab.empty() ? vocab_path_for(checkpoint) : vocab, ck);
  const auto data = make_examples(read_captions(captions), load_features(features), v);
  return evaluate(ck.params, data, v, config.beam, ck.params.dims.max_length, config.threads);
}

std::vector<CaptionRecord> cmd_decode(const Config& config, const fs::path& checkpoint, const fs::path& features,
                                      const fs::path& vocab, const fs::path& attention_trace) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Vocabulary v = load_vocab_checked(vocab.empty() ? vocab_path_for(checkpoint) : vocab, ck);
  const bool trace = !attention_trace.empty();
  if (trace && ck.params.dims.variant != Variant::Full) {
    throw ConfigError("decode: an attention trace needs the full variant, checkpoint is " +
                      variant_name(ck.params.dims.variant));
  }
  const auto videos = load_features(features);
  std::vector<std::pair<std::string, const Tensor*>> items;
  for (const auto& [id, f] : videos) items.emplace_back(id, &f);

  std::vector<DecodeResult> results(items.size());
  parallel_for(items.size(), config.threads, [&](std::size_t i) {
    const std::size_t max_len = ck.params.dims.max_length;
    results[i] = config.beam == 1 ? greedy_decode(ck.params, *items[i].second, max_len)
                                  : beam_search(ck.params, *items[i].second, config.beam, max_len);
  });

  std::vector<CaptionRecord> out;
  std::ofstream trace_out;
  if (trace) trace_out = open_output(attention_trace);
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.push_back({items[i].first, v.decode(results[i].tokens)});
    if (trace) {
      nlohmann::ordered_json j;
      j["video_id"] = items[i].first;
      json tokens = json::array();
      for (TokenId t : results[i].tokens) tokens.push_back(v.token(t));
      j["tokens"] = tokens;
      j["attention"] = results[i].attention;
      trace_out << j.dump() << '\n';
    }
  }
  if (trace && !trace_out) throw IoError("failed writing " + attention_trace.string());
  return out;
}

GradcheckReport cmd_gradcheck(const Config& config, GradcheckOptions options) {
  options.kernel_size = config.model.kernel_size;
  options.encoder_blocks = config.model.encoder_blocks;
  options.decoder_blocks = config.model.decoder_blocks;
  options.variant = config.model.variant;
  options.seed = config.seed;
  return run_gradcheck(options);
}

BenchReport cmd_bench(const Config& config, BenchOptions options) {
  const std::size_t vocab = options.dims.vocab_size;
  options.dims = config.model;
  options.dims.vocab_size = vocab;
  options.frames = config.frames;
  options.threads = config.threads;
  options.seed = config.seed;
  return run_bench(options);
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

namespace {

/// Flags that override config keys. Each one set on the command line is
/// written into a JSON patch applied on top of the config file.
struct Overrides {
  std::optional<std::string> variant;
  std::optional<std::size_t> dims, feature_dim, kernel_size, encoder_blocks, decoder_blocks, max_length;
  std::optional<std::size_t> min_count, frames, batch_size, epochs, threads, beam;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> samples, holdout, synth_vocab, synth_length;
  std::optional<double> noise;
  std::optional<std::string> data_dir, checkpoint, vocab, loss_log;

  void add_to(CLI::App& app) {
    app.add_option("--variant", variant, "Model variant: td1, td2 or full");
    app.add_option("--dims", dims, "Encoder, decoder, attention and embedding width");
    app.add_option("--feature-dim", feature_dim, "Feature dimension for generated data");
    app.add_option("--kernel-size", kernel_size, "Convolution kernel size (odd)");
    app.add_option("--enc-blocks", encoder_blocks, "Deformable encoder blocks");
    app.add_option("--dec-blocks", decoder_blocks, "Shifted decoder blocks");
    app.add_option("--max-length", max_length, "Maximum decoding steps");
    app.add_option("--min-count", min_count, "Minimum word count for the vocabulary");
    app.add_option("--frames", frames, "Frames per video for generated inputs");
    app.add_option("--lr", lr, "Adam learning rate");
    app.add_option("--batch-size", batch_size, "Mini-batch size");
    app.add_option("--epochs", epochs, "Training epochs");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Worker threads");
    app.add_option("--beam", beam, "Beam width (1 = greedy)");
    app.add_option("--samples", samples, "Synthetic samples");
    app.add_option("--holdout", holdout, "Synthetic samples held out as the test split");
    app.add_option("--synth-vocab", synth_vocab, "Synthetic vocabulary size, reserved tokens included");
    app.add_option("--synth-length", synth_length, "Synthetic caption length");
    app.add_option("--noise", noise, "Synthetic feature noise");
    app.add_option("--data", data_dir, "Data directory");
    app.add_option("--checkpoint", checkpoint, "Checkpoint path");
    app.add_option("--vocab", vocab, "Vocabulary file");
    app.add_option("--loss-log", loss_log, "Training loss log (default: stdout)");
  }

  json patch() const {
    json p = json::object();
    auto set = [&](const char* section, const char* key, const auto& value) {
      if (value) p[section][key] = *value;
    };
    set("model", "variant", variant);
    if (dims) {
      for (const char* key : {"encoder_dim", "decoder_dim", "attention_dim", "embed_dim"}) p["model"][key] = *dims;
    }
    set("model", "feature_dim", feature_dim);
    set("model", "kernel_size", kernel_size);
    set("model", "encoder_blocks", encoder_blocks);
    set("model", "decoder_blocks", decoder_blocks);
    set("model", "max_length", max_length);
    set("data", "min_count", min_count);
    set("data", "frames", frames);
    set("optimizer", "lr", lr);
    set("training", "batch_size", batch_size);
    set("training", "epochs", epochs);
    set("training", "seed", seed);
    set("training", "threads", threads);
    set("inference", "beam", beam);
    set("synth", "samples", samples);
    set("synth", "holdout", holdout);
    set("synth", "vocab_size", synth_vocab);
    set("synth", "length", synth_length);
    set("synth", "noise", noise);
    set("paths", "data_dir", data_dir);
    set("paths", "checkpoint", checkpoint);
    set("paths", "vocab", vocab);
    set("paths", "loss_log", loss_log);
    return p;
  }
};

Config resolve_config(const std::string& config_flag, const Overrides& overrides) {
  json base = json::object();
  std::string path = config_flag;
  if (path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) path = env;
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    try {
      base = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError("config " + path + ": " + e.what(), e.byte);
    }
  }
  merge_json(base, overrides.patch());
  return config_from_json(base);
}

fs::path or_default(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

fs::path require_data_dir(const Config& c, const char* what) {
  if (c.data_dir.empty()) throw ConfigError(std::string(what) + ": no data directory (set --data)");
  return c.data_dir;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal deformable convolutional encoder-decoder for sequence captioning"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, std::string("JSON config file (default: $") + kConfigEnvVar + ")");
  Overrides overrides;
  overrides.add_to(app);

  auto* synth = app.add_subcommand("synth", "Write a synthetic copy-task dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory (default: paths.data_dir)");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string train_captions, train_features;
  train_cmd->add_option("--captions", train_captions, "Caption file (default: <data>/train.jsonl)");
  train_cmd->add_option("--features", train_features, "Feature directory (default: <data>/features)");

  auto* eval_cmd = app.add_subcommand("eval", "Report BLEU@4 and token accuracy");
  std::string eval_split = "test", eval_captions, eval_features, eval_out;
  eval_cmd->add_option("--split", eval_split, "Caption split in the data directory")->capture_default_str();
  eval_cmd->add_option("--captions", eval_captions, "Caption file (overrides --split)");
  eval_cmd->add_option("--features", eval_features, "Feature directory (default: <data>/features)");
  eval_cmd->add_option("--out", eval_out, "Report file (default: stdout)");

  auto* decode_cmd = app.add_subcommand("decode", "Caption every video in a feature directory");
  std::string decode_features, decode_out, decode_attention;
  decode_cmd->add_option("--features", decode_features, "Feature directory or file (default: <data>/features)");
  decode_cmd->add_option("--out", decode_out, "Caption file (default: stdout)");
  decode_cmd->add_option("--attention", decode_attention, "Attention trace file (full variant)");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  GradcheckOptions gc;
  gradcheck_cmd->add_option("--gc-vocab", gc.vocab_size, "Vocabulary size")->capture_default_str();
  gradcheck_cmd->add_option("--gc-frames", gc.frames, "Frames")->capture_default_str();
  gradcheck_cmd->add_option("--gc-length", gc.length, "Caption steps")->capture_default_str();
  gradcheck_cmd->add_option("--gc-dim", gc.dim, "Every hidden dimension")->capture_default_str();
  gradcheck_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  gradcheck_cmd->add_option("--corrupt", gc.corrupt, "Distort the analytic gradient of one parameter (test hook)");

  auto* bench_cmd = app.add_subcommand("bench", "Time teacher-forced versus incremental decoding");
  BenchOptions bench;
  bench.dims.vocab_size = 1000;
  bench_cmd->add_option("--length", bench.length, "Decoding steps")->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "Timing repeats")->capture_default_str();
  bench_cmd->add_option("--bench-vocab", bench.dims.vocab_size, "Vocabulary size")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage_error: " << e.what() << "\n";
    return 2;
  }

  try {
    const Config config = resolve_config(config_path, overrides);
    if (synth->parsed()) {
      const fs::path dir = synth_out.empty() ? require_data_dir(config, "synth") : fs::path(synth_out);
      cmd_synth(config, dir);
      out << "wrote " << config.synth_samples << " samples to " << dir.string() << "\n";
    } else if (train_cmd->parsed()) {
      TrainPaths paths;
      const bool need_dir = train_captions.empty() || train_features.empty();
      const fs::path dir = need_dir ? require_data_dir(config, "train") : fs::path();
      paths.captions = or_default(train_captions, dir / "train.jsonl");
      paths.features = or_default(train_features, dir / "features");
      paths.checkpoint = config.checkpoint;
      paths.vocab = config.vocab;
      if (config.loss_log.empty()) {
        cmd_train(config, paths, out);
      } else {
        std::ofstream log = open_output(config.loss_log);
        cmd_train(config, paths, log);
      }
    } else if (eval_cmd->parsed()) {
      if (config.checkpoint.empty()) throw ConfigError("eval: no checkpoint (set --checkpoint)");
      const bool need_dir = eval_captions.empty() || eval_features.empty();
      const fs::path dir = need_dir ? require_data_dir(config, "eval") : fs::path();
      const EvalReport report =
          cmd_eval(config, config.checkpoint, or_default(eval_captions, dir / (eval_split + ".jsonl")),
                   or_default(eval_features, dir / "features"), config.vocab);
      if (eval_out.empty()) {
        out << format_report(report);
      } else {
        open_output(eval_out) << format_report(report);
      }
    } else if (decode_cmd->parsed()) {
      if (config.checkpoint.empty()) throw ConfigError("decode: no checkpoint (set --checkpoint)");
      const fs::path features =
          decode_features.empty() ? require_data_dir(config, "decode") / "features" : fs::path(decode_features);
      const auto records = cmd_decode(config, config.checkpoint, features, config.vocab, decode_attention);
      if (decode_out.empty()) {
        for (const auto& r : records) {
          nlohmann::ordered_json j;
          j["video_id"] = r.video_id;
          j["caption"] = r.caption;
          out << j.dump() << "\n";
        }
      } else {
        ensure_parent(decode_out);
        write_captions(decode_out, records);
      }
    } else if (gradcheck_cmd->parsed()) {
      const GradcheckReport report = cmd_gradcheck(config, gc);
      out << format_gradcheck(report);
      if (!report.pass()) {
        std::size_t failed = 0;
        for (const auto& row : report.rows) failed += row.pass ? 0 : 1;
        throw ContractError("gradient check failed for " + std::to_string(failed) + " of " +
                            std::to_string(report.rows.size()) + " parameters");
      }
    } else if (bench_cmd->parsed()) {
      out << format_bench(cmd_bench(config, bench));
    }
    out.flush();
    return 0;
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error: internal_error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tdconved
