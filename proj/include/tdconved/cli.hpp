#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tdconved/config.hpp"
#include "tdconved/errors.hpp"
#include "tdconved/evaluation.hpp"
#include "tdconved/verify.hpp"

namespace tdconved {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "TDCONVED_CONFIG";

/// Exit codes: 0 success, 2 usage, 3 config, 4 format, 5 io, 6 shape,
/// 7 index, 8 capacity, 9 contract (including failed checks), 1 other.
int exit_code(ErrorCategory category);

/// Parses argv, runs the subcommand and maps failures to an exit code plus a
/// single "error: <category>: <message>" line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Subcommands, also usable directly. Paths follow the data directory layout
// written by cmd_synth: <dir>/features/<video_id>.tdfe, <dir>/train.jsonl,
// <dir>/test.jsonl, <dir>/vocab.txt.

void cmd_synth(const Config& config, const std::filesystem::path& out_dir);

struct TrainPaths {
  std::filesystem::path captions;
  std::filesystem::path features;
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;  // loaded when it exists, otherwise built
};
/// Writes the checkpoint after every epoch and <checkpoint>.vocab. The log
/// has one "epoch=..." record per line; wall-clock lines start with '#'.
void cmd_train(const Config& config, const TrainPaths& paths, std::ostream& log);

/// Vocabulary stored beside a checkpoint by cmd_train.
std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint);

EvalReport cmd_eval(const Config& config, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& captions, const std::filesystem::path& features,
                    const std::filesystem::path& vocab);

/// Decodes every video in `features`; returns the caption records and, when
/// `attention_trace` is non-empty, writes one JSON line per video with the
/// per-token attention rows.
std::vector<CaptionRecord> cmd_decode(const Config& config, const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& features, const std::filesystem::path& vocab,
                                      const std::filesystem::path& attention_trace);

GradcheckReport cmd_gradcheck(const Config& config, GradcheckOptions options);
BenchReport cmd_bench(const Config& config, BenchOptions options);

}  // namespace tdconved
