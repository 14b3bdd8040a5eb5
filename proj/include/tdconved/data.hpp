#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdconved/special_tokens.hpp"
#include "tdconved/tensor.hpp"

namespace tdconved {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Bidirectional token/index map. Slots 0..3 are <p>, <s>, <e>, <unk>;
/// unknown words map to <unk>.
class Vocabulary {
 public:
  Vocabulary();
  /// Reserved tokens followed by `words` in order. Throws ConfigError on
  /// duplicates or if a word collides with a reserved token.
  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId index(const std::string& token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<TokenId> encode(const std::string& caption) const;
  std::string decode(std::span<const TokenId> ids) const;

  /// FNV-1a 64 over the tokens joined by '\n'.
  std::uint64_t hash() const;

  /// One token per line; line number = index.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Lowercase, treat ASCII punctuation as whitespace, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// Words with count >= min_count, ordered by (count desc, word asc), after the
/// reserved slots. Throws ConfigError on an empty corpus or min_count == 0.
Vocabulary build_vocab(const std::vector<std::string>& captions, std::size_t min_count);

// ---------------------------------------------------------------------------
// Feature files (.tdfe)
// ---------------------------------------------------------------------------

/// Layout: "TDFE", u32 rows, u32 cols, rows·cols float32, all little-endian,
/// row-major.
std::vector<std::uint8_t> serialize_tdfe(const Tensor& features);
Tensor parse_tdfe(std::span<const std::uint8_t> bytes);
void write_tdfe(const std::filesystem::path& path, const Tensor& features);
Tensor read_tdfe(const std::filesystem::path& path);

/// Reads every <video_id>.tdfe in a directory (or the single file given).
std::map<std::string, Tensor> load_features(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Caption files (.jsonl)
// ---------------------------------------------------------------------------

struct CaptionRecord {
  std::string video_id;
  std::string caption;

  bool operator==(const CaptionRecord&) const = default;
};

/// One JSON object per line: {"video_id": "...", "caption": "..."}.
std::vector<CaptionRecord> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);

// ---------------------------------------------------------------------------
// Examples and batching
// ---------------------------------------------------------------------------

/// One training pair: features [N_v, D_v] and caption ids (no <s>/<e>).
struct Example {
  std::string video_id;
  Tensor features;
  std::vector<TokenId> caption;
};

/// Joins captions with their features; throws ConfigError on a missing id.
std::vector<Example> make_examples(const std::vector<CaptionRecord>& records,
                                   const std::map<std::string, Tensor>& features, const Vocabulary& vocab);

struct SequenceBatch {
  std::vector<std::size_t> indices;          // positions in the source dataset
  std::vector<const Tensor*> features;       // B entries, [N_v, D_v] each
  std::vector<std::vector<TokenId>> token_in;   // B × T, starts with <s>
  std::vector<std::vector<TokenId>> token_out;  // B × T, <e> at lengths[b]−1
  std::vector<std::size_t> lengths;          // caption length + 1

  std::size_t size() const noexcept { return lengths.size(); }
  std::size_t width() const noexcept { return token_in.empty() ? 0 : token_in.front().size(); }
};

/// Seeded shuffle, then consecutive batches padded with <p> to the longest
/// item in each batch. The final short batch is kept.
std::vector<SequenceBatch> make_batches(const std::vector<Example>& data, std::size_t batch_size,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic copy task
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n_samples = 100;
  std::size_t vocab_size = 20;  // total, including the 4 reserved slots
  std::size_t seq_len = 8;
  std::size_t feature_dim = 64;
  double noise = 0.1;
};

struct SynthDataset {
  std::vector<std::string> words;  // content words, id = kNumReserved + position
  Tensor table;                    // [vocab_size, D_v] token embeddings
  std::vector<CaptionRecord> captions;
  std::map<std::string, Tensor> features;
};

/// Each sample draws seq_len content tokens uniformly; frame i carries the
/// table row of token i plus N(0, noise²) noise; the caption is the token
/// sequence itself. Deterministic in the seed.
SynthDataset synth_copy_task(const SynthOptions& options);

/// Vocabulary whose ids match the synthetic table rows.
Vocabulary synth_vocabulary(const SynthDataset& data);

}  // namespace tdconved
