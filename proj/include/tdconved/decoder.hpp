#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tdconved/ops.hpp"
#include "tdconved/special_tokens.hpp"

namespace tdconved {

struct ShiftedConvParams {
  Tensor weight;  // [2·D_f, k·D_f]
  Tensor bias;    // [2·D_f]
};

struct DecoderParams {
  Tensor word_emb;                         // [V, D_w]
  Tensor pos_emb;                          // [T_max, D_w]
  Linear video_map;                        // D_r -> D_w
  Linear input_proj;                       // 2·D_w -> D_f
  std::vector<ShiftedConvParams> blocks;
  std::size_t kernel_size = 3;

  std::size_t vocab_size() const { return word_emb.rows(); }
  std::size_t max_length() const { return pos_emb.rows(); }
  std::size_t embed_dim() const { return word_emb.cols(); }
  std::size_t state_dim() const { return input_proj.out_dim(); }
  std::size_t video_dim() const { return video_map.in_dim(); }
};

DecoderParams make_decoder(std::size_t vocab_size, std::size_t max_length, std::size_t video_dim,
                           std::size_t embed_dim, std::size_t state_dim, std::size_t kernel_size,
                           std::size_t num_blocks, Rng& rng);

/// Decoder input at step t: input_proj([word_emb[token] + pos_emb[t], W_i·video + b_i]).
std::vector<double> embed_step(TokenId token, std::size_t t, std::span<const double> video,
                               const DecoderParams& params);

/// Causal block: q_t = glu(W·[q_{t−k+1}, …, q_t] + b) + q_t with k−1 zero
/// vectors of left padding.
Tensor shifted_conv_block(const Tensor& seq, const ShiftedConvParams& block, std::size_t kernel_size);

struct DecoderCache {
  std::vector<TokenId> tokens;
  std::vector<double> video;         // z̃
  std::vector<double> video_mapped;  // W_i·z̃ + b_i
  Tensor inputs;                     // [T, 2·D_w] concatenated embeddings
  std::vector<Tensor> block_inputs;  // [T, D_f] per block
  std::vector<Tensor> windows;       // [T, k·D_f] per block
  std::vector<Tensor> pre_gates;     // [T, 2·D_f] per block
};

/// Hidden states h [T, D_f] for a teacher-forced token row (all steps in one
/// pass). Row t depends only on tokens[0..t] and the video vector.
Tensor decode_hidden(std::span<const TokenId> tokens, std::span<const double> video, const DecoderParams& params,
                     DecoderCache* cache = nullptr, std::size_t threads = 1);

/// Accumulates parameter gradients and returns dL/d(video vector).
std::vector<double> decode_backward(const DecoderParams& params, const DecoderCache& cache, const Tensor& dh,
                                    DecoderParams& grads);

/// Per-block history of the last k−1 block inputs for stepwise decoding.
/// Copyable, so beam hypotheses can fork it.
class IncrementalState {
 public:
  IncrementalState() = default;
  explicit IncrementalState(const DecoderParams& params);

  /// Number of tokens consumed so far.
  std::size_t position() const noexcept { return position_; }
  std::size_t history() const noexcept { return history_; }

  /// Input to `block` at step position() − age, or empty when that step
  /// precedes the sequence. age in [1, k−1].
  std::span<const double> past(std::size_t block, std::size_t age) const;
  void record(std::size_t block, std::span<const double> input);
  void advance() noexcept { ++position_; }

 private:
  std::size_t position_ = 0;
  std::size_t history_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> rings_;
};

/// h_t for the next token, given a state that has consumed exactly t tokens.
/// Agrees with row t of decode_hidden on the same prefix.
std::vector<double> decode_step(TokenId token, std::size_t t, std::span<const double> video,
                                IncrementalState& state, const DecoderParams& params);

}  // namespace tdconved
