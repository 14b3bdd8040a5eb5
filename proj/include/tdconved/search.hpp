#pragma once

#include <cstddef>
#include <vector>

#include "tdconved/model.hpp"

namespace tdconved {

/// A partial caption during beam search. `tokens` excludes the leading <s>;
/// when `finished` is set the last token is <e>.
struct Hypothesis {
  std::vector<TokenId> tokens;
  double logp = 0.0;
  IncrementalState state;
  bool finished = false;
  std::vector<std::vector<double>> attention;  // one λ row per token
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // caption, without <s> or <e>
  double logp = 0.0;            // summed log-probability, including <e> if emitted
  bool finished = false;
  std::vector<std::vector<double>> attention;  // one row per caption token (Full variant only)
};

/// Log-probabilities of the next token with <s> and <p> masked to −inf.
std::vector<double> next_token_logprobs(const std::vector<double>& logits);

/// Argmax decoding from <s>: ties go to the lowest index; stops after <e> or
/// max_len generated tokens (the <e> counts toward max_len).
DecodeResult greedy_decode(const ModelParams& params, const Tensor& features, std::size_t max_len);
DecodeResult greedy_decode(const ModelParams& params, const InferenceContext& ctx, std::size_t max_len);

/// Beam search keeping the top `beam` candidates per step by summed
/// log-probability. Candidates ending in <e> retire to a finished pool, the
/// rest stay live; once max_len is reached the live hypotheses join the pool
/// unfinished. Returns the pool's best total log-probability without length
/// normalization. Ties rank by lower token index, then earlier parent. The
/// greedy path is always a candidate, so for beam > 1 the score is never below
/// greedy_decode's.
DecodeResult beam_search(const ModelParams& params, const Tensor& features, std::size_t beam, std::size_t max_len);
DecodeResult beam_search(const ModelParams& params, const InferenceContext& ctx, std::size_t beam,
                         std::size_t max_len);

}  // namespace tdconved
