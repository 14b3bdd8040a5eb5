#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tdconved/model.hpp"

namespace tdconved {

struct GradcheckOptions {
  std::size_t vocab_size = 5;
  std::size_t frames = 3;   // N_v
  std::size_t length = 4;   // T
  std::size_t dim = 4;      // every feature and hidden dimension
  std::size_t kernel_size = 3;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  Variant variant = Variant::Full;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-4;
  double min_offset_gap = 0.05;  // sampled positions stay this far from integers
  /// Test hook: parameter whose analytic gradient is deliberately distorted.
  std::string corrupt;
};

struct GradcheckRow {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;  // one per named parameter, in model order
  double tolerance = 0.0;
  double min_offset_gap = 0.0;     // smallest observed distance to an integer

  bool pass() const;
};

/// Compares backward() against central differences of the summed token loss
/// for every parameter of a small random model. Deformable offsets are
/// randomised until every one is at least `min_offset_gap` from an integer.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

/// Plain-text table, one row per parameter plus a summary line.
std::string format_gradcheck(const GradcheckReport& report);

struct BenchOptions {
  ModelDims dims;  // vocab_size 0 means 1000
  std::size_t frames = 25;
  std::size_t length = 25;
  std::size_t repeats = 5;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::size_t length = 0;
  std::size_t frames = 0;
  std::size_t threads = 0;
  std::size_t repeats = 0;
  double parallel_seconds = 0.0;    // median teacher-forced pass over all steps
  double sequential_seconds = 0.0;  // median of `length` incremental steps
  double max_abs_diff = 0.0;        // logits disagreement between the paths
  double ratio() const { return parallel_seconds > 0.0 ? sequential_seconds / parallel_seconds : 0.0; }
};

/// Times the decoder, attention and head over a fixed encoding: one
/// teacher-forced pass versus step-by-step incremental decoding of the same
/// tokens. Throws ContractError when the logits differ by more than 1e-9.
BenchReport run_bench(const BenchOptions& options);

/// `key=value` lines.
std::string format_bench(const BenchReport& report);

}  // namespace tdconved
