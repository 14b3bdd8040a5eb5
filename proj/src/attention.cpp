#include "tdconved/attention.hpp"

#include <cmath>
#include <string>

#include "tdconved/errors.hpp"
#include "tdconved/parallel.hpp"

namespace tdconved {

AttentionParams make_attention(std::size_t context_dim, std::size_t query_dim, std::size_t hidden_dim, Rng& rng) {
  AttentionParams p{Tensor({1, hidden_dim}), Tensor({hidden_dim, context_dim}), Tensor({hidden_dim, query_dim}),
                    Tensor({hidden_dim})};
  init_uniform_fan_in(p.score_weight, rng);
  init_uniform_fan_in(p.context_weight, rng);
  init_uniform_fan_in(p.query_weight, rng);
  return p;
}

namespace {

void check_params(const AttentionParams& p) {
  const std::size_t da = p.context_weight.rows();
  require_shape(p.score_weight, {1, da}, "attention score weight");
  require_shape(p.bias, {da}, "attention bias");
  if (p.query_weight.rank() != 2 || p.query_weight.rows() != da) {
    throw ShapeError("attention query weight " + shape_to_string(p.query_weight.shape()) + " vs hidden dim " +
                     std::to_string(da));
  }
}

// One attention step. `activations` receives the N_v tanh rows.
void attend_row(const AttentionMemory& memory, std::span<const double> query, const AttentionParams& params,
                std::span<double> activations, std::span<double> weights, std::span<double> context) {
  const std::size_t n = memory.z.rows();
  const std::size_t da = params.hidden_dim();
  std::vector<double> hq(da);
  affine(params.query_weight, params.bias, query, hq);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto u = activations.subspan(i * da, da);
    auto zp = memory.projected.row(i);
    for (std::size_t c = 0; c < da; ++c) u[c] = std::tanh(zp[c] + hq[c]);
    scores[i] = dot(params.score_weight.row(0), u);
  }
  softmax(scores, weights);
  std::fill(context.begin(), context.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(weights[i], memory.z.row(i), context);
}

}  // namespace

AttentionMemory make_attention_memory(const Tensor& z, const AttentionParams& params) {
  check_params(params);
  if (z.empty() || z.rank() != 2) throw ContractError("attention: needs at least one context vector");
  if (z.cols() != params.context_weight.cols()) {
    throw ShapeError("attention: context vectors " + shape_to_string(z.shape()) + " vs W_z " +
                     shape_to_string(params.context_weight.shape()));
  }
  AttentionMemory m{z, Tensor({z.rows(), params.hidden_dim()})};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto out = m.projected.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = dot(params.context_weight.row(j), z.row(i));
  }
  return m;
}

AttentionResult attend(const AttentionMemory& memory, std::span<const double> query, const AttentionParams& params) {
  if (query.size() != params.query_weight.cols()) {
    throw ShapeError("attention: query of " + std::to_string(query.size()) + " values vs W_h " +
                     shape_to_string(params.query_weight.shape()));
  }
  const std::size_t n = memory.z.rows();
  std::vector<double> activations(n * params.hidden_dim());
  AttentionResult r{std::vector<double>(n), std::vector<double>(memory.z.cols())};
  attend_row(memory, query, params, activations, r.weights, r.context);
  return r;
}

AttentionResult attend(const Tensor& z, std::span<const double> query, const AttentionParams& params) {
  return attend(make_attention_memory(z, params), query, params);
}

Tensor attend_all(const Tensor& z, const Tensor& queries, const AttentionParams& params, AttentionCache* cache,
                  std::size_t threads) {
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.memory = make_attention_memory(z, params);
  if (queries.rank() != 2 || queries.cols() != params.query_weight.cols()) {
    throw ShapeError("attention: queries " + shape_to_string(queries.shape()) + " vs W_h " +
                     shape_to_string(params.query_weight.shape()));
  }
  const std::size_t len = queries.rows();
  const std::size_t n = z.rows();
  const std::size_t da = params.hidden_dim();
  c.queries = queries;
  c.activations = Tensor({len * n, da});
  c.weights = Tensor({len, n});
  Tensor context({len, z.cols()});
  parallel_for(len, threads, [&](std::size_t t) {
    auto act = c.activations.values().subspan(t * n * da, n * da);
    attend_row(c.memory, queries.row(t), params, act, c.weights.row(t), context.row(t));
  });
  return context;
}

void attend_all_backward(const AttentionParams& params, const AttentionCache& cache, const Tensor& dcontext,
                         Tensor& dz, Tensor& dqueries, AttentionParams& grads) {
  const Tensor& z = cache.memory.z;
  const std::size_t len = cache.queries.rows();
  const std::size_t n = z.rows();
  const std::size_t da = params.hidden_dim();
  require_shape(dcontext, {len, z.cols()}, "attention backward dcontext");
  require_shape(dz, z.shape(), "attention backward dz");
  require_shape(dqueries, cache.queries.shape(), "attention backward dqueries");

  Tensor dprojected({n, da});
  std::vector<double> dweights(n);
  std::vector<double> dscores(n);
  std::vector<double> dhq(da);
  auto wa = params.score_weight.row(0);
  auto dwa = grads.score_weight.row(0);
  for (std::size_t t = 0; t < len; ++t) {
    auto g = dcontext.row(t);
    auto lambda = cache.weights.row(t);
    for (std::size_t i = 0; i < n; ++i) {
      dweights[i] = dot(g, z.row(i));
      axpy(lambda[i], g, dz.row(i));
    }
    softmax_backward(lambda, dweights, dscores);
    std::fill(dhq.begin(), dhq.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto u = cache.activations.row(t * n + i);
      axpy(dscores[i], u, dwa);
      auto dp = dprojected.row(i);
      for (std::size_t c = 0; c < da; ++c) {
        const double dpre = dscores[i] * wa[c] * (1.0 - u[c] * u[c]);
        dp[c] += dpre;
        dhq[c] += dpre;
      }
    }
    affine_backward(params.query_weight, cache.queries.row(t), dhq, dqueries.row(t), grads.query_weight,
                    grads.bias);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto dp = dprojected.row(i);
    for (std::size_t j = 0; j < da; ++j) {
      if (dp[j] == 0.0) continue;
      axpy(dp[j], z.row(i), grads.context_weight.row(j));
      axpy(dp[j], params.context_weight.row(j), dz.row(i));
    }
  }
}

}  // namespace tdconved
