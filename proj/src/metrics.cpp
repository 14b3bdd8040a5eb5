#include "tdconved/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "tdconved/errors.hpp"

namespace tdconved {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> count_ngrams(const std::vector<std::string>& words, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) ++counts[NGram(words.begin() + i, words.begin() + i + n)];
  return counts;
}

}  // namespace

double BleuStats::brevity_penalty() const {
  if (hyp_length == 0) return 0.0;
  if (hyp_length >= ref_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
}

double BleuStats::score() const {
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  return brevity_penalty() * std::exp(log_sum / 4.0);
}

BleuStats bleu_stats(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw ConfigError("bleu4: empty corpus");
  BleuStats s;
  for (const auto& pair : pairs) {
    if (pair.references.empty()) throw ConfigError("bleu4: hypothesis without references");
    const std::size_t len = pair.hypothesis.size();
    s.hyp_length += len;

    std::size_t closest = pair.references.front().size();
    for (const auto& ref : pair.references) {
      const auto d_ref = std::llabs(static_cast<long long>(ref.size()) - static_cast<long long>(len));
      const auto d_best = std::llabs(static_cast<long long>(closest) - static_cast<long long>(len));
      if (d_ref < d_best || (d_ref == d_best && ref.size() < closest)) closest = ref.size();
    }
    s.ref_length += closest;

    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp = count_ngrams(pair.hypothesis, n);
      std::map<NGram, std::size_t> max_ref;
      for (const auto& ref : pair.references) {
        for (const auto& [gram, c] : count_ngrams(ref, n)) {
          auto& slot = max_ref[gram];
          slot = std::max(slot, c);
        }
      }
      for (const auto& [gram, c] : hyp) {
        const auto it = max_ref.find(gram);
        if (it != max_ref.end()) s.matches[n - 1] += std::min(c, it->second);
      }
      if (len >= n) s.totals[n - 1] += len - n + 1;
    }
  }
  return s;
}

double bleu4(const std::vector<EvalPair>& pairs) { return bleu_stats(pairs).score(); }

}  // namespace tdconved
