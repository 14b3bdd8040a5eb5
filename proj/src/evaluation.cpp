#include "tdconved/evaluation.hpp"

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "tdconved/errors.hpp"
#include "tdconved/metrics.hpp"
#include "tdconved/parallel.hpp"
#include "tdconved/search.hpp"

namespace tdconved {

TeacherForcedStats teacher_forced_stats(const ModelParams& params, const std::vector<Example>& data,
                                        std::size_t threads) {
  std::vector<TeacherForcedStats> per_item(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const Example& ex = data[i];
    std::vector<TokenId> in{kStartToken};
    in.insert(in.end(), ex.caption.begin(), ex.caption.end());
    std::vector<TokenId> out(ex.caption.begin(), ex.caption.end());
    out.push_back(kEndToken);
    const Tensor logits = forward_train(params, ex.features, in);
    auto& s = per_item[i];
    s.loss_sum = sequence_loss(logits, out);
    s.tokens = out.size();
    for (std::size_t t = 0; t < out.size(); ++t) {
      const auto row = logits.row(t);
      std::size_t best = 0;
      for (std::size_t v = 1; v < row.size(); ++v) {
        if (row[v] > row[best]) best = v;
      }
      if (best == out[t]) ++s.correct;
    }
  });
  TeacherForcedStats total;
  for (const auto& s : per_item) {
    total.loss_sum += s.loss_sum;
    total.tokens += s.tokens;
    total.correct += s.correct;
  }
  return total;
}

EvalReport evaluate(const ModelParams& params, const std::vector<Example>& data, const Vocabulary& vocab,
                    std::size_t beam, std::size_t max_len, std::size_t threads) {
  if (data.empty()) throw ConfigError("evaluation dataset is empty");
  if (beam == 0) throw ConfigError("beam must be at least 1");

  EvalReport report;
  report.samples = data.size();
  report.beam = beam;
  const TeacherForcedStats tf = teacher_forced_stats(params, data, threads);
  report.tokens = tf.tokens;
  report.loss = tf.mean_loss();
  report.token_accuracy = tf.accuracy();

  // First occurrence of each video fixes its decoding order.
  std::vector<std::size_t> first;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<std::vector<std::string>>> refs;
  auto words = [&](const std::vector<TokenId>& ids) {
    std::vector<std::string> out;
    for (TokenId id : ids) out.push_back(vocab.token(id));
    return out;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [it, inserted] = slot.emplace(data[i].video_id, first.size());
    if (inserted) {
      first.push_back(i);
      refs.emplace_back();
    }
    refs[it->second].push_back(words(data[i].caption));
  }
  report.videos = first.size();

  std::vector<DecodeResult> decoded(first.size());
  parallel_for(first.size(), threads, [&](std::size_t v) {
    const Tensor& features = data[first[v]].features;
    decoded[v] = beam == 1 ? greedy_decode(params, features, max_len) : beam_search(params, features, beam, max_len);
  });
  std::vector<EvalPair> pairs;
  for (std::size_t v = 0; v < first.size(); ++v) pairs.push_back({words(decoded[v].tokens), refs[v]});
  report.bleu4 = bleu4(pairs);
  return report;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "samples=" << r.samples << "\n"
     << "videos=" << r.videos << "\n"
     << "tokens=" << r.tokens << "\n"
     << "beam=" << r.beam << "\n"
     << "loss=" << r.loss << "\n"
     << "token_accuracy=" << r.token_accuracy << "\n"
     << "bleu4=" << r.bleu4 << "\n";
  return os.str();
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw FormatError("report: bad value for '" + key + "': " + value, 0);
  return out;
}

}  // namespace

EvalReport parse_report(const std::string& text) {
  EvalReport r;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(is, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: expected key=value", line_start);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "samples") r.samples = parse_number<std::size_t>(key, value);
    else if (key == "videos") r.videos = parse_number<std::size_t>(key, value);
    else if (key == "tokens") r.tokens = parse_number<std::size_t>(key, value);
    else if (key == "beam") r.beam = parse_number<std::size_t>(key, value);
    else if (key == "loss") r.loss = parse_number<double>(key, value);
    else if (key == "token_accuracy") r.token_accuracy = parse_number<double>(key, value);
    else if (key == "bleu4") r.bleu4 = parse_number<double>(key, value);
    else throw FormatError("report: unknown key '" + key + "'", line_start);
    seen.insert(key);
  }
  for (const char* key : {"samples", "videos", "tokens", "beam", "loss", "token_accuracy", "bleu4"}) {
    if (!seen.count(key)) throw FormatError(std::string("report: missing key '") + key + "'", offset);
  }
  return r;
}

}  // namespace tdconved
