#include "tdconved/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "tdconved/errors.hpp"
#include "tdconved/rng.hpp"

namespace tdconved {

namespace fs = std::filesystem;

namespace {

const char* const kReserved[kNumReserved] = {"<p>", "<s>", "<e>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_.reserve(kNumReserved + words.size());
  for (const char* r : kReserved) {
    index_.emplace(r, tokens_.size());
    tokens_.emplace_back(r);
  }
  for (const auto& w : words) {
    if (!index_.emplace(w, tokens_.size()).second) throw ConfigError("vocabulary: duplicate token '" + w + "'");
    tokens_.push_back(w);
  }
}

TokenId Vocabulary::index(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkToken : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw IndexError("vocabulary: index " + std::to_string(id) + " outside " + std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(const std::string& caption) const {
  std::vector<TokenId> ids;
  for (const auto& w : tokenize(caption)) ids.push_back(index(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i) mix('\n');
    for (unsigned char c : tokens_[i]) mix(c);
  }
  return h;
}

void Vocabulary::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kNumReserved) throw FormatError("vocabulary " + path.string() + " lacks reserved tokens", 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (lines[i] != kReserved[i]) {
      throw FormatError("vocabulary " + path.string() + ": line " + std::to_string(i + 1) + " must be " +
                            kReserved[i],
                        offset);
    }
    offset += lines[i].size() + 1;
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + kNumReserved, lines.end()));
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(const std::vector<std::string>& captions, std::size_t min_count) {
  if (captions.empty()) throw ConfigError("build_vocab: empty caption corpus");
  if (min_count == 0) throw ConfigError("build_vocab: min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (auto& w : tokenize(c)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, n] : counts) {
    if (n < min_count) continue;
    if (std::find(std::begin(kReserved), std::end(kReserved), w) != std::end(kReserved)) continue;
    kept.emplace_back(w, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, n] : kept) words.push_back(w);
  return Vocabulary(words);
}

// ---------------------------------------------------------------------------
// .tdfe
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'D', 'F', 'E'};
constexpr std::size_t kHeaderSize = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> serialize_tdfe(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("tdfe: features must be a matrix, got " + shape_to_string(features.shape()));
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kHeaderSize + 4 * features.numel());
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor parse_tdfe(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("tdfe: truncated magic", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("tdfe: bad magic", 0);
  if (bytes.size() < kHeaderSize) throw FormatError("tdfe: truncated header", bytes.size());
  const std::uint32_t rows = get_u32(bytes, 4);
  const std::uint32_t cols = get_u32(bytes, 8);
  if (rows == 0 || cols == 0) throw FormatError("tdfe: zero extent", rows == 0 ? 4 : 8);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = kHeaderSize + 4 * count;
  if (bytes.size() < need) {
    throw FormatError("tdfe: truncated payload, expected " + std::to_string(need) + " bytes", bytes.size());
  }
  if (bytes.size() > need) throw FormatError("tdfe: trailing bytes", need);
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i));
    if (!std::isfinite(f)) throw FormatError("tdfe: non-finite value", kHeaderSize + 4 * i);
    t[i] = static_cast<double>(f);
  }
  return t;
}

void write_tdfe(const fs::path& path, const Tensor& features) {
  const auto bytes = serialize_tdfe(features);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tdfe(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_tdfe(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::map<std::string, Tensor> load_features(const fs::path& path) {
  std::map<std::string, Tensor> out;
  if (fs::is_regular_file(path)) {
    out.emplace(path.stem().string(), read_tdfe(path));
    return out;
  }
  if (!fs::is_directory(path)) throw IoError("feature path " + path.string() + " does not exist");
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tdfe") {
      out.emplace(entry.path().stem().string(), read_tdfe(entry.path()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// captions
// ---------------------------------------------------------------------------

std::vector<CaptionRecord> read_captions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read captions " + path.string());
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("video_id").get<std::string>(), j.at("caption").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad caption record: " + e.what(), line_start);
    }
  }
  return records;
}

void write_captions(const fs::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write captions " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["video_id"] = r.video_id;
    j["caption"] = r.caption;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing captions " + path.string());
}

// ---------------------------------------------------------------------------
// examples / batches
// ---------------------------------------------------------------------------

std::vector<Example> make_examples(const std::vector<CaptionRecord>& records,
                                   const std::map<std::string, Tensor>& features, const Vocabulary& vocab) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = features.find(r.video_id);
    if (it == features.end()) throw ConfigError("no features for video '" + r.video_id + "'");
    out.push_back({r.video_id, it->second, vocab.encode(r.caption)});
  }
  return out;
}

std::vector<SequenceBatch> make_batches(const std::vector<Example>& data, std::size_t batch_size,
                                        std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);

  std::vector<SequenceBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    SequenceBatch b;
    std::size_t width = 0;
    for (std::size_t i = start; i < end; ++i) width = std::max(width, data[order[i]].caption.size() + 1);
    for (std::size_t i = start; i < end; ++i) {
      const Example& ex = data[order[i]];
      const std::size_t len = ex.caption.size() + 1;
      std::vector<TokenId> in(width, kPadToken);
      std::vector<TokenId> out(width, kPadToken);
      in[0] = kStartToken;
      for (std::size_t t = 0; t < ex.caption.size(); ++t) {
        in[t + 1] = ex.caption[t];
        out[t] = ex.caption[t];
      }
      out[len - 1] = kEndToken;
      b.indices.push_back(order[i]);
      b.features.push_back(&ex.features);
      b.token_in.push_back(std::move(in));
      b.token_out.push_back(std::move(out));
      b.lengths.push_back(len);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// synthetic task
// ---------------------------------------------------------------------------

SynthDataset synth_copy_task(const SynthOptions& o) {
  if (o.vocab_size < kNumReserved + 1) {
    throw ConfigError("synth: vocab_size must be at least " + std::to_string(kNumReserved + 1));
  }
  if (o.seq_len == 0 || o.feature_dim == 0) throw ConfigError("synth: seq_len and feature_dim must be positive");
  Rng root(o.seed);
  Rng table_rng = root.split();
  Rng token_rng = root.split();
  Rng noise_rng = root.split();

  SynthDataset d;
  const std::size_t content = o.vocab_size - kNumReserved;
  for (std::size_t i = 0; i < content; ++i) d.words.push_back("w" + std::to_string(kNumReserved + i));
  d.table = Tensor({o.vocab_size, o.feature_dim});
  for (double& v : d.table.values()) v = static_cast<double>(static_cast<float>(table_rng.normal()));

  for (std::size_t s = 0; s < o.n_samples; ++s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "vid%05zu", s);
    std::string id = buf;
    Tensor f({o.seq_len, o.feature_dim});
    std::string caption;
    for (std::size_t i = 0; i < o.seq_len; ++i) {
      const std::size_t tok = kNumReserved + static_cast<std::size_t>(token_rng.below(content));
      if (i) caption += ' ';
      caption += d.words[tok - kNumReserved];
      auto row = f.row(i);
      auto src = d.table.row(tok);
      for (std::size_t c = 0; c < o.feature_dim; ++c) {
        const double noise = o.noise == 0.0 ? 0.0 : o.noise * noise_rng.normal();
        row[c] = static_cast<double>(static_cast<float>(src[c] + noise));
      }
    }
    d.captions.push_back({id, caption});
    d.features.emplace(std::move(id), std::move(f));
  }
  return d;
}

Vocabulary synth_vocabulary(const SynthDataset& data) { return Vocabulary(data.words); }

}  // namespace tdconved
