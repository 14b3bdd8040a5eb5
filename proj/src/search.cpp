#include "tdconved/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tdconved {

std::vector<double> next_token_logprobs(const std::vector<double>& logits) {
  std::vector<double> masked = logits;
  masked[kPadToken] = -std::numeric_limits<double>::infinity();
  masked[kStartToken] = -std::numeric_limits<double>::infinity();
  std::vector<double> out(masked.size());
  log_softmax(masked, out);
  return out;
}

namespace {

DecodeResult to_result(Hypothesis h) {
  DecodeResult r;
  r.logp = h.logp;
  r.finished = h.finished;
  r.tokens = std::move(h.tokens);
  r.attention = std::move(h.attention);
  if (r.finished) {
    r.tokens.pop_back();
    if (!r.attention.empty()) r.attention.pop_back();
  }
  return r;
}

struct Candidate {
  double score;
  TokenId token;
  std::size_t parent;
};

}  // namespace

DecodeResult greedy_decode(const ModelParams& params, const InferenceContext& ctx, std::size_t max_len) {
  Hypothesis h;
  h.state = ctx.initial_state();
  TokenId input = kStartToken;
  const bool trace = params.attention.has_value();
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<double> weights;
    const auto lp = next_token_logprobs(ctx.step(input, h.state, trace ? &weights : nullptr));
    // Scores include the running total so argmax ties resolve exactly as in
    // a width-1 beam.
    TokenId best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (TokenId v = 0; v < lp.size(); ++v) {
      const double score = h.logp + lp[v];
      if (score > best_score) {
        best_score = score;
        best = v;
      }
    }
    h.logp = best_score;
    h.tokens.push_back(best);
    if (trace) h.attention.push_back(std::move(weights));
    if (best == kEndToken) {
      h.finished = true;
      break;
    }
    input = best;
  }
  return to_result(std::move(h));
}

DecodeResult greedy_decode(const ModelParams& params, const Tensor& features, std::size_t max_len) {
  return greedy_decode(params, InferenceContext(params, features), max_len);
}

DecodeResult beam_search(const ModelParams& params, const InferenceContext& ctx, std::size_t beam,
                         std::size_t max_len) {
  beam = std::max<std::size_t>(beam, 1);
  const bool trace = params.attention.has_value();
  std::vector<Hypothesis> live(1);
  live[0].state = ctx.initial_state();
  std::vector<Hypothesis> pool;

  auto best_pool = [&]() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      if (pool[i].logp > pool[best].logp) best = i;
    }
    return best;
  };

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    // Log-probabilities never increase a score, so a finished hypothesis at
    // least as good as every live one cannot be overtaken.
    if (!pool.empty()) {
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) best_live = std::max(best_live, h.logp);
      if (pool[best_pool()].logp >= best_live) break;
    }

    std::vector<std::vector<double>> logprobs(live.size());
    std::vector<std::vector<double>> weights(live.size());
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Hypothesis& h = live[i];
      const TokenId input = h.tokens.empty() ? kStartToken : h.tokens.back();
      logprobs[i] = next_token_logprobs(ctx.step(input, h.state, trace ? &weights[i] : nullptr));
      for (TokenId v = 0; v < logprobs[i].size(); ++v) {
        if (std::isinf(logprobs[i][v])) continue;
        candidates.push_back({h.logp + logprobs[i][v], v, i});
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });

    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      const Hypothesis& parent = live[cand.parent];
      Hypothesis child;
      child.tokens = parent.tokens;
      child.tokens.push_back(cand.token);
      child.logp = cand.score;
      child.state = parent.state;
      child.attention = parent.attention;
      if (trace) child.attention.push_back(weights[cand.parent]);
      if (cand.token == kEndToken) {
        child.finished = true;
        pool.push_back(std::move(child));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) pool.push_back(std::move(h));
  if (pool.empty()) return {};
  DecodeResult best = to_result(std::move(pool[best_pool()]));
  // Pruning can drop the greedy path, so it is scored separately and kept
  // when strictly better.
  if (beam > 1) {
    DecodeResult greedy = greedy_decode(params, ctx, max_len);
    if (greedy.logp > best.logp) return greedy;
  }
  return best;
}

DecodeResult beam_search(const ModelParams& params, const Tensor& features, std::size_t beam, std::size_t max_len) {
  return beam_search(params, InferenceContext(params, features), beam, max_len);
}

}  // namespace tdconved
