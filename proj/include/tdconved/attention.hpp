#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tdconved/ops.hpp"

namespace tdconved {

/// Additive temporal attention: a_i = W_a·tanh(W_z·z_i + W_h·h + b_a).
struct AttentionParams {
  Tensor score_weight;    // W_a [1, D_a]
  Tensor context_weight;  // W_z [D_a, D_r]
  Tensor query_weight;    // W_h [D_a, D_f]
  Tensor bias;            // b_a [D_a]

  std::size_t hidden_dim() const { return context_weight.rows(); }
};

AttentionParams make_attention(std::size_t context_dim, std::size_t query_dim, std::size_t hidden_dim, Rng& rng);

struct AttentionResult {
  std::vector<double> weights;  // λ over the N_v context vectors
  std::vector<double> context;  // ẑ = Σ λ_i z_i
};

/// Context vectors with their W_z projection precomputed; built once per
/// video and reused for every decoding step.
struct AttentionMemory {
  Tensor z;          // [N_v, D_r]
  Tensor projected;  // [N_v, D_a]  W_z·z_i
};

AttentionMemory make_attention_memory(const Tensor& z, const AttentionParams& params);

AttentionResult attend(const Tensor& z, std::span<const double> query, const AttentionParams& params);
AttentionResult attend(const AttentionMemory& memory, std::span<const double> query, const AttentionParams& params);

struct AttentionCache {
  AttentionMemory memory;
  Tensor queries;     // [T, D_f]
  Tensor activations; // [T, N_v, D_a] flattened as [T·N_v, D_a]; tanh outputs
  Tensor weights;     // [T, N_v]
};

/// Attends for every row of `queries` ([T, D_f]); returns ẑ as [T, D_r].
Tensor attend_all(const Tensor& z, const Tensor& queries, const AttentionParams& params, AttentionCache* cache,
                  std::size_t threads = 1);

/// Accumulates parameter gradients, dz ([N_v, D_r]) and dqueries ([T, D_f]).
void attend_all_backward(const AttentionParams& params, const AttentionCache& cache, const Tensor& dcontext,
                         Tensor& dz, Tensor& dqueries, AttentionParams& grads);

}  // namespace tdconved
