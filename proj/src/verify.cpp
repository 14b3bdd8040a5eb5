#include "tdconved/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tdconved/errors.hpp"
#include "tdconved/gradcheck.hpp"
#include "tdconved/rng.hpp"

namespace tdconved {

namespace {

double integer_gap(double x) {
  const double f = x - std::floor(x);
  return std::min(f, 1.0 - f);
}

/// Smallest distance of any deformable offset to an integer in one forward
/// pass; +inf when the model has no deformable blocks.
double smallest_offset_gap(const ForwardCache& cache) {
  double gap = INFINITY;
  for (const auto& block : cache.encoder.blocks) {
    for (double v : block.offsets.values()) gap = std::min(gap, integer_gap(v));
  }
  return gap;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

bool GradcheckReport::pass() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.pass; });
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  ModelDims dims;
  dims.vocab_size = o.vocab_size;
  dims.feature_dim = dims.encoder_dim = dims.decoder_dim = dims.attention_dim = dims.embed_dim = o.dim;
  dims.kernel_size = o.kernel_size;
  dims.encoder_blocks = o.encoder_blocks;
  dims.decoder_blocks = o.decoder_blocks;
  dims.max_length = std::max<std::size_t>(o.length, 1);
  dims.variant = o.variant;
  validate(dims);
  if (o.frames == 0 || o.length == 0) throw ConfigError("gradcheck: frames and length must be at least 1");

  Rng rng(o.seed);
  ModelParams params = make_model(dims, rng.next_u64());
  Tensor features({o.frames, o.dim});
  for (double& v : features.values()) v = rng.normal();
  std::vector<TokenId> in{kStartToken}, out;
  for (std::size_t t = 0; t < o.length; ++t) {
    if (t + 1 < o.length) in.push_back(kNumReserved + rng.below(o.vocab_size - kNumReserved));
    out.push_back(1 + rng.below(o.vocab_size - 1));
  }

  // Nonzero offsets, away from the interpolation kinks at integers.
  ForwardCache cache;
  double gap = INFINITY;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 10000) throw ContractError("gradcheck: could not place offsets away from integers");
    for (auto& block : params.encoder.blocks) {
      for (double& w : block.offset_weight.values()) w = rng.uniform(-0.1, 0.1);
      for (double& b : block.offset_bias.values()) b = rng.uniform(-0.45, 0.45);
    }
    cache = ForwardCache{};
    forward_train(params, features, in, &cache);
    gap = smallest_offset_gap(cache);
    if (gap >= o.min_offset_gap) break;
  }

  const Tensor logits = forward_train(params, features, in, &cache);
  ModelParams grads = zeros_like(params);
  backward(params, cache, sequence_loss_grad(logits, out), grads);

  GradcheckReport report;
  report.tolerance = o.tolerance;
  report.min_offset_gap = gap;
  auto named = named_parameters(params);
  const auto named_grads = named_parameters(static_cast<const ModelParams&>(grads));
  bool corrupt_found = o.corrupt.empty();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor* target = named[i].tensor;
    const Tensor original = *target;
    auto loss = [&](const Tensor& x) {
      *target = x;
      return sequence_loss(forward_train(params, features, in), out);
    };
    const Tensor numeric = finite_diff_grad(loss, original, o.eps);
    *target = original;

    std::vector<double> analytic(named_grads[i].tensor->values().begin(), named_grads[i].tensor->values().end());
    if (named[i].name == o.corrupt) {
      corrupt_found = true;
      for (double& g : analytic) g = 1.5 * g + 1e-2;
    }
    GradcheckRow row;
    row.name = named[i].name;
    row.size = original.numel();
    row.max_rel_error = max_relative_error(analytic, numeric.values());
    row.pass = row.max_rel_error < o.tolerance;
    report.rows.push_back(row);
  }
  if (!corrupt_found) throw ConfigError("gradcheck: unknown parameter '" + o.corrupt + "' for --corrupt");
  return report;
}

std::string format_gradcheck(const GradcheckReport& r) {
  std::ostringstream os;
  std::size_t width = 9;
  for (const auto& row : r.rows) width = std::max(width, row.name.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %6s %12s %s\n", static_cast<int>(width), "parameter", "size", "max_rel_err",
                "result");
  os << buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-*s %6zu %12.3e %s\n", static_cast<int>(width), row.name.c_str(), row.size,
                  row.max_rel_error, row.pass ? "PASS" : "FAIL");
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "tolerance=%.1e min_offset_gap=%.4f overall=%s\n", r.tolerance, r.min_offset_gap,
                r.pass() ? "PASS" : "FAIL");
  os << buf;
  return os.str();
}

BenchReport run_bench(const BenchOptions& o) {
  ModelDims dims = o.dims;
  if (dims.vocab_size == 0) dims.vocab_size = 1000;
  dims.max_length = std::max(dims.max_length, o.length);
  validate(dims);
  if (o.frames == 0 || o.length == 0 || o.repeats == 0) {
    throw ConfigError("bench: frames, length and repeats must be at least 1");
  }

  Rng rng(o.seed);
  const ModelParams params = make_model(dims, rng.next_u64());
  Tensor features({o.frames, dims.feature_dim});
  for (double& v : features.values()) v = rng.normal();
  std::vector<TokenId> tokens{kStartToken};
  while (tokens.size() < o.length) tokens.push_back(kNumReserved + rng.below(dims.vocab_size - kNumReserved));
  const Tensor z = InferenceContext(params, features).context();

  auto run_parallel = [&] { return logits_from_encoding(params, z, tokens, nullptr, o.threads); };
  auto run_sequential = [&] {
    const InferenceContext ctx = InferenceContext::from_encoding(params, z);
    IncrementalState state = ctx.initial_state();
    Tensor logits({o.length, dims.vocab_size});
    for (std::size_t t = 0; t < o.length; ++t) {
      const auto row = ctx.step(tokens[t], state);
      std::copy(row.begin(), row.end(), logits.row(t).begin());
    }
    return logits;
  };

  BenchReport report;
  report.length = o.length;
  report.frames = o.frames;
  report.threads = o.threads;
  report.repeats = o.repeats;
  {
    const Tensor a = run_parallel();
    const Tensor b = run_sequential();
    for (std::size_t i = 0; i < a.numel(); ++i) report.max_abs_diff = std::max(report.max_abs_diff, std::abs(a[i] - b[i]));
    if (!(report.max_abs_diff <= 1e-9)) {
      throw ContractError("bench: parallel and incremental logits disagree by " + std::to_string(report.max_abs_diff));
    }
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> par, seq;
  for (std::size_t r = 0; r < o.repeats; ++r) {
    auto t0 = clock::now();
    volatile double sink = run_parallel()[0];
    auto t1 = clock::now();
    sink = run_sequential()[0];
    auto t2 = clock::now();
    (void)sink;
    par.push_back(std::chrono::duration<double>(t1 - t0).count());
    seq.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  report.parallel_seconds = median(par);
  report.sequential_seconds = median(seq);
  return report;
}

std::string format_bench(const BenchReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "length=" << r.length << "\n"
     << "frames=" << r.frames << "\n"
     << "threads=" << r.threads << "\n"
     << "repeats=" << r.repeats << "\n"
     << "max_abs_diff=" << r.max_abs_diff << "\n"
     << "parallel_seconds=" << r.parallel_seconds << "\n"
     << "sequential_seconds=" << r.sequential_seconds << "\n"
     << "ratio=" << r.ratio() << "\n";
  return os.str();
}

}  // namespace tdconved
