#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "tdconved/adam.hpp"
#include "tdconved/data.hpp"
#include "tdconved/model.hpp"

namespace tdconved {

struct TrainOptions {
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;   // 1-based
  double loss = 0.0;       // mean cross-entropy per target token
  std::size_t tokens = 0;
  std::size_t steps = 0;
  double seconds = 0.0;    // wall clock, not reproducible
};

struct BatchLoss {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
};

/// Gradient of the batch objective (summed token loss divided by the number
/// of target tokens in the batch) written into `grads`, which must have the
/// structure of `params`. Items are processed independently and reduced in
/// batch order, so the result does not depend on `threads`.
BatchLoss batch_gradient(const ModelParams& params, const SequenceBatch& batch, ModelParams& grads,
                         std::size_t threads = 1);

/// Adam over all parameters with per-epoch seeded shuffling.
class Trainer {
 public:
  Trainer(ModelParams params, TrainOptions options);

  /// One pass over `data`. Throws ConfigError on an empty dataset.
  EpochRecord run_epoch(const std::vector<Example>& data);

  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  std::size_t epochs_done() const noexcept { return epoch_; }

 private:
  void apply_gradients();

  ModelParams params_;
  TrainOptions options_;
  ModelParams grads_;
  std::vector<AdamState> adam_;
  std::size_t epoch_ = 0;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> log;
};

TrainResult train(ModelParams init, const std::vector<Example>& data, const TrainOptions& options,
                  const EpochCallback& on_epoch = {});

/// Seed used to shuffle epoch `epoch` (1-based).
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

}  // namespace tdconved
