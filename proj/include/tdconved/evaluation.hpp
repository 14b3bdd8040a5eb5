#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tdconved/data.hpp"
#include "tdconved/model.hpp"

namespace tdconved {

struct TeacherForcedStats {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t correct = 0;  // argmax (ties to the lowest index) equals the target

  double accuracy() const { return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0; }
  double mean_loss() const { return tokens ? loss_sum / static_cast<double>(tokens) : 0.0; }
};

/// Next-token statistics over every caption position including the final <e>.
TeacherForcedStats teacher_forced_stats(const ModelParams& params, const std::vector<Example>& data,
                                        std::size_t threads = 1);

struct EvalReport {
  std::size_t samples = 0;   // captions
  std::size_t videos = 0;    // distinct video ids
  std::size_t tokens = 0;
  double loss = 0.0;
  double token_accuracy = 0.0;
  double bleu4 = 0.0;
  std::size_t beam = 1;

  bool operator==(const EvalReport&) const = default;
};

/// Teacher-forced statistics plus corpus BLEU@4 of one decoded caption per
/// video (greedy when beam == 1) against all captions of that video.
/// Throws ConfigError on an empty dataset.
EvalReport evaluate(const ModelParams& params, const std::vector<Example>& data, const Vocabulary& vocab,
                    std::size_t beam, std::size_t max_len, std::size_t threads = 1);

/// `key=value` lines; doubles use 17 significant digits so parsing is exact.
std::string format_report(const EvalReport& report);
/// Throws FormatError on a malformed line, unknown key or missing key.
EvalReport parse_report(const std::string& text);

}  // namespace tdconved
