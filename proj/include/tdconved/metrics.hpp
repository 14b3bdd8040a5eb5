#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace tdconved {

/// A hypothesis with one or more reference token sequences.
struct EvalPair {
  std::vector<std::string> hypothesis;
  std::vector<std::vector<std::string>> references;
};

/// Corpus-level BLEU sufficient statistics.
struct BleuStats {
  std::array<std::size_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::size_t, 4> totals{};   // hypothesis n-grams, n = 1..4
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;  // effective (closest) reference length

  double brevity_penalty() const;
  /// Geometric mean of the four precisions times the brevity penalty; 0 when
  /// any order has no match (no smoothing).
  double score() const;
};

BleuStats bleu_stats(const std::vector<EvalPair>& pairs);

/// Corpus BLEU@4. Throws ConfigError for an empty corpus or a pair without
/// references.
double bleu4(const std::vector<EvalPair>& pairs);

}  // namespace tdconved
