#include "tdconved/train.hpp"

#include <chrono>

#include "tdconved/errors.hpp"
#include "tdconved/parallel.hpp"

namespace tdconved {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  Rng rng(seed ^ 0x5DEECE66DULL);
  std::uint64_t s = 0;
  for (std::size_t e = 0; e < epoch; ++e) s = rng.next_u64();
  return s;
}

BatchLoss batch_gradient(const ModelParams& params, const SequenceBatch& batch, ModelParams& grads,
                         std::size_t threads) {
  set_zero(grads);
  BatchLoss total;
  for (std::size_t b = 0; b < batch.size(); ++b) total.tokens += batch.lengths[b];
  if (total.tokens == 0) return total;
  const double scale = 1.0 / static_cast<double>(total.tokens);

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<ModelParams> item_grads(workers, zeros_like(params));
  std::vector<double> item_loss(workers, 0.0);

  for (std::size_t start = 0; start < batch.size(); start += workers) {
    const std::size_t count = std::min(workers, batch.size() - start);
    parallel_for(count, count, [&](std::size_t w) {
      const std::size_t b = start + w;
      const std::size_t len = batch.lengths[b];
      std::span<const TokenId> in(batch.token_in[b].data(), len);
      std::span<const TokenId> out(batch.token_out[b].data(), len);
      ForwardCache cache;
      const Tensor logits = forward_train(params, *batch.features[b], in, &cache);
      item_loss[w] = sequence_loss(logits, out);
      set_zero(item_grads[w]);
      backward(params, cache, sequence_loss_grad(logits, out, kPadToken, scale), item_grads[w]);
    });
    for (std::size_t w = 0; w < count; ++w) {
      total.loss_sum += item_loss[w];
      accumulate(grads, item_grads[w]);
    }
  }
  return total;
}

Trainer::Trainer(ModelParams params, TrainOptions options)
    : params_(std::move(params)), options_(options), grads_(zeros_like(params_)) {
  if (options_.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  adam_.resize(named_parameters(params_).size());
}

void Trainer::apply_gradients() {
  auto params = named_parameters(params_);
  auto grads = named_parameters(grads_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    auto slot = p.ensure_grad();
    auto g = grads[i].tensor->values();
    std::copy(g.begin(), g.end(), slot.begin());
    adam_step(p, p.grad(), adam_[i], options_.adam);
  }
}

EpochRecord Trainer::run_epoch(const std::vector<Example>& data) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  const auto start = std::chrono::steady_clock::now();
  ++epoch_;
  EpochRecord rec;
  rec.epoch = epoch_;
  double loss_sum = 0.0;
  for (const auto& batch : make_batches(data, options_.batch_size, epoch_seed(options_.seed, epoch_))) {
    const BatchLoss bl = batch_gradient(params_, batch, grads_, options_.threads);
    loss_sum += bl.loss_sum;
    rec.tokens += bl.tokens;
    ++rec.steps;
    apply_gradients();
  }
  rec.loss = rec.tokens ? loss_sum / static_cast<double>(rec.tokens) : 0.0;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

TrainResult train(ModelParams init, const std::vector<Example>& data, const TrainOptions& options,
                  const EpochCallback& on_epoch) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  Trainer trainer(std::move(init), options);
  TrainResult result;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    result.log.push_back(trainer.run_epoch(data));
    if (on_epoch) on_epoch(result.log.back(), trainer.params());
  }
  result.params = std::move(trainer.params());
  return result;
}

}  // namespace tdconved
