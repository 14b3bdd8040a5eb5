#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "support.hpp"
#include "tdconved/data.hpp"
#include "tdconved/errors.hpp"

using namespace tdconved;
namespace fs = std::filesystem;
using testing_support::random_tensor;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("tdconved_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// FNV-1a over the float32 image of each value, independent of the writer.
std::uint64_t digest(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : t.values()) {
    const float f = static_cast<float>(v);
    unsigned char b[4];
    std::memcpy(b, &f, 4);
    for (unsigned char c : b) h = (h ^ c) * 1099511628211ULL;
  }
  return h;
}

std::vector<Example> toy_examples(const std::vector<std::size_t>& lengths, std::map<std::string, Tensor>& store) {
  Rng rng(9);
  std::vector<Example> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Example e;
    e.video_id = "v" + std::to_string(i);
    e.features = random_tensor({2, 3}, rng);
    for (std::size_t j = 0; j < lengths[i]; ++j) e.caption.push_back(kNumReserved + (i + j) % 5);
    store[e.video_id] = e.features;
    out.push_back(std::move(e));
  }
  return out;
}

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
std::vector<long double> solve(std::vector<std::vector<long double>> a, std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<long double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    long double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace

// --- vocabulary -----------------------------------------------------------

TEST(Vocabulary, ReservedSlots) {
  const Vocabulary v;
  ASSERT_EQ(v.size(), kNumReserved);
  EXPECT_EQ(v.index("<p>"), kPadToken);
  EXPECT_EQ(v.index("<s>"), kStartToken);
  EXPECT_EQ(v.index("<e>"), kEndToken);
  EXPECT_EQ(v.index("<unk>"), kUnkToken);
  EXPECT_EQ(v.index("anything"), kUnkToken);
  EXPECT_THROW(v.token(4), IndexError);
  EXPECT_THROW(Vocabulary({"a", "a"}), ConfigError);
  EXPECT_THROW(Vocabulary({"<s>"}), ConfigError);
}

TEST(Vocabulary, CountingExamples) {
  const auto v = build_vocab({"a b", "a"}, 1);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.index("a"), 4u);
  EXPECT_EQ(v.index("b"), 5u);
  const auto v2 = build_vocab({"a b", "a"}, 2);
  ASSERT_EQ(v2.size(), 5u);
  EXPECT_EQ(v2.index("a"), 4u);
  EXPECT_EQ(v2.index("b"), kUnkToken);
  EXPECT_THROW(build_vocab({}, 1), ConfigError);
  EXPECT_THROW(build_vocab({"a"}, 0), ConfigError);
}

TEST(Vocabulary, MatchesIndependentFrequencyCounter) {
  Rng rng(4);
  const std::vector<std::string> words{"cat", "dog", "runs", "a", "the", "on", "mat", "big", "red", "jumps"};
  std::vector<std::string> corpus;
  for (int i = 0; i < 100; ++i) {
    std::string c;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t j = 0; j < n; ++j) {
      // Skewed draw so counts differ.
      const std::size_t w = std::min(rng.below(words.size()), rng.below(words.size()));
      c += (j ? " " : "") + words[w];
    }
    corpus.push_back(c);
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& c : corpus) {
    std::size_t start = 0;
    while (start <= c.size()) {
      const auto end = std::min(c.find(' ', start), c.size());
      ++counts[c.substr(start, end - start)];
      start = end + 1;
    }
  }
  for (std::size_t min_count : {1, 3, 10}) {
    std::vector<std::pair<std::string, std::size_t>> table;
    for (const auto& [w, n] : counts)
      if (n >= min_count) table.emplace_back(w, n);
    std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const auto v = build_vocab(corpus, min_count);
    ASSERT_EQ(v.size(), kNumReserved + table.size());
    for (std::size_t i = 0; i < table.size(); ++i) EXPECT_EQ(v.token(kNumReserved + i), table[i].first);
  }
  auto reversed = corpus;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(build_vocab(reversed, 1).tokens(), build_vocab(corpus, 1).tokens());
  EXPECT_EQ(build_vocab(reversed, 1).hash(), build_vocab(corpus, 1).hash());
}

TEST(Vocabulary, TokenizeLowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("A man, riding a HORSE!"),
            (std::vector<std::string>{"a", "man", "riding", "a", "horse"}));
  EXPECT_EQ(tokenize("  multiple\tspaces\nhere  "), (std::vector<std::string>{"multiple", "spaces", "here"}));
  EXPECT_TRUE(tokenize("...").empty());
}

TEST(Vocabulary, EncodeDecodeAndPersistence) {
  TempDir dir;
  const auto v = build_vocab({"a dog runs", "a cat"}, 1);
  const auto ids = v.encode("A dog flies");
  EXPECT_EQ(ids, (std::vector<TokenId>{v.index("a"), v.index("dog"), kUnkToken}));
  EXPECT_EQ(v.decode(ids), "a dog <unk>");
  v.save(dir.path() / "vocab.txt");
  const auto loaded = Vocabulary::load(dir.path() / "vocab.txt");
  EXPECT_EQ(loaded.tokens(), v.tokens());
  EXPECT_EQ(loaded.hash(), v.hash());
  EXPECT_NE(build_vocab({"a b"}, 1).hash(), build_vocab({"a c"}, 1).hash());

  std::ofstream(dir.path() / "bad.txt") << "<p>\n<x>\n<e>\n<unk>\n";
  EXPECT_THROW(Vocabulary::load(dir.path() / "bad.txt"), FormatError);
  EXPECT_THROW(Vocabulary::load(dir.path() / "missing.txt"), IoError);
}

// --- feature files ----------------------------------------------------------

TEST(Tdfe, SmallRoundTripIsBitwise) {
  const Tensor m = Tensor::matrix({{1.0, -2.5, 0.125}, {3.0, 1e-3f, -7.0}});
  const Tensor back = parse_tdfe(serialize_tdfe(m));
  ASSERT_EQ(back.shape(), m.shape());
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(m.values()[i])));
}

TEST(Tdfe, LayoutIsLittleEndianFloat32) {
  const auto bytes = serialize_tdfe(Tensor::matrix({{1.0, 2.0}}));
  ASSERT_EQ(bytes.size(), 4u + 8u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TDFE");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  // 1.0f = 0x3F800000, 2.0f = 0x40000000.
  EXPECT_EQ(bytes[15], 0x3F);
  EXPECT_EQ(bytes[19], 0x40);
}

TEST(Tdfe, ChecksumSurvivesFileRoundTrip) {
  TempDir dir;
  Rng rng(3);
  const Tensor m = random_tensor({25, 128}, rng, 10.0);
  write_tdfe(dir.path() / "clip.tdfe", m);
  const Tensor back = read_tdfe(dir.path() / "clip.tdfe");
  EXPECT_EQ(digest(back), digest(m));
  // Once rounded to float32, a second round trip is exact.
  EXPECT_TRUE(parse_tdfe(serialize_tdfe(back)) == back);
}

TEST(Tdfe, CorruptInputIsFormatErrorWithOffset) {
  auto bytes = serialize_tdfe(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
  for (std::size_t cut : {0u, 3u, 7u, 12u, 19u}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + cut);
    try {
      parse_tdfe(t);
      ADD_FAILURE() << "accepted " << cut << " bytes";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_tdfe(bad), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(parse_tdfe(extra), FormatError);
  auto nan = bytes;
  nan[12] = nan[13] = 0xFF;
  nan[14] = 0xC0;
  nan[15] = 0x7F;
  try {
    parse_tdfe(nan);
    ADD_FAILURE() << "accepted NaN";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 12u);
  }
}

TEST(Tdfe, LoadFeaturesFromDirectory) {
  TempDir dir;
  Rng rng(1);
  const Tensor a = random_tensor({3, 2}, rng), b = random_tensor({4, 2}, rng);
  write_tdfe(dir.path() / "va.tdfe", a);
  write_tdfe(dir.path() / "vb.tdfe", b);
  std::ofstream(dir.path() / "notes.txt") << "ignored";
  const auto all = load_features(dir.path());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(digest(all.at("va")), digest(a));
  EXPECT_EQ(all.at("vb").rows(), 4u);
  EXPECT_EQ(load_features(dir.path() / "va.tdfe").count("va"), 1u);
  EXPECT_THROW(load_features(dir.path() / "nope"), IoError);
}

// --- captions ---------------------------------------------------------------

TEST(Captions, JsonlRoundTripIsByteExact) {
  TempDir dir;
  const std::vector<CaptionRecord> records{
      {"vid1", "a man is \"singing\""}, {"vid2", "tab\there, unicode é ✓"}, {"vid1", "second caption"}};
  write_captions(dir.path() / "a.jsonl", records);
  const auto back = read_captions(dir.path() / "a.jsonl");
  EXPECT_EQ(back, records);
  write_captions(dir.path() / "b.jsonl", back);
  EXPECT_EQ(read_file(dir.path() / "a.jsonl"), read_file(dir.path() / "b.jsonl"));
}

TEST(Captions, MalformedLineReportsOffset) {
  TempDir dir;
  std::ofstream(dir.path() / "c.jsonl") << "{\"video_id\":\"a\",\"caption\":\"x\"}\nnot json\n";
  try {
    read_captions(dir.path() / "c.jsonl");
    ADD_FAILURE() << "accepted malformed line";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 31u);  // 30-byte record plus newline
  }
  std::ofstream(dir.path() / "d.jsonl") << "{\"video_id\":\"a\"}\n";
  EXPECT_THROW(read_captions(dir.path() / "d.jsonl"), FormatError);
}

TEST(Captions, MakeExamplesJoinsFeatures) {
  const auto vocab = build_vocab({"a b"}, 1);
  std::map<std::string, Tensor> feats{{"x", Tensor::zeros({2, 2})}};
  const auto ex = make_examples({{"x", "a b a"}}, feats, vocab);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].caption, (std::vector<TokenId>{4, 5, 4}));
  EXPECT_THROW(make_examples({{"y", "a"}}, feats, vocab), ConfigError);
}

// --- batching ---------------------------------------------------------------

TEST(Batches, SizesAndShortFinalBatch) {
  std::map<std::string, Tensor> store;
  const auto data = toy_examples(std::vector<std::size_t>(10, 3), store);
  const auto batches = make_batches(data, 4, 1);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4u);
  EXPECT_EQ(batches[1].size(), 4u);
  EXPECT_EQ(batches[2].size(), 2u);
  for (const auto& b : batches) {
    EXPECT_EQ(b.width(), 4u);
    for (const auto& row : b.token_out) EXPECT_EQ(std::count(row.begin(), row.end(), kPadToken), 0);
  }
  EXPECT_THROW(make_batches(data, 0, 1), ConfigError);
}

TEST(Batches, LayoutInvariantsAndReconstruction) {
  std::map<std::string, Tensor> store;
  const auto data = toy_examples({1, 5, 2, 7, 3, 3, 4, 6, 2}, store);
  const auto batches = make_batches(data, 4, 77);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto& src = data[b.indices[i]];
      const std::size_t len = b.lengths[i];
      ASSERT_EQ(len, src.caption.size() + 1);
      EXPECT_EQ(b.token_in[i][0], kStartToken);
      EXPECT_EQ(b.token_out[i][len - 1], kEndToken);
      EXPECT_EQ(b.features[i], &src.features);
      for (std::size_t t = len; t < b.width(); ++t) {
        EXPECT_EQ(b.token_in[i][t], kPadToken);
        EXPECT_EQ(b.token_out[i][t], kPadToken);
      }
      // Un-padding recovers the caption from either row.
      EXPECT_EQ(std::vector<TokenId>(b.token_in[i].begin() + 1, b.token_in[i].begin() + len), src.caption);
      EXPECT_EQ(std::vector<TokenId>(b.token_out[i].begin(), b.token_out[i].begin() + len - 1), src.caption);
      seen.push_back(b.indices[i]);
    }
    std::size_t widest = 0;
    for (auto l : b.lengths) widest = std::max(widest, l);
    EXPECT_EQ(b.width(), widest);
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> identity(data.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  EXPECT_EQ(seen, identity);
}

TEST(Batches, ShuffleDependsOnlyOnSeed) {
  std::map<std::string, Tensor> store;
  const auto data = toy_examples(std::vector<std::size_t>(20, 2), store);
  auto order = [&](std::uint64_t seed) {
    std::vector<std::size_t> idx;
    for (const auto& b : make_batches(data, 6, seed)) idx.insert(idx.end(), b.indices.begin(), b.indices.end());
    return idx;
  };
  EXPECT_EQ(order(5), order(5));
  EXPECT_NE(order(5), order(6));
}

// --- synthetic task ---------------------------------------------------------

TEST(Synth, DeterministicPerSeed) {
  SynthOptions o;
  o.seed = 12;
  o.n_samples = 30;
  const auto a = synth_copy_task(o), b = synth_copy_task(o);
  EXPECT_EQ(a.captions, b.captions);
  EXPECT_TRUE(a.table == b.table);
  ASSERT_EQ(a.features.size(), 30u);
  for (const auto& [id, f] : a.features) EXPECT_TRUE(f == b.features.at(id));
  o.seed = 13;
  EXPECT_NE(synth_copy_task(o).captions, a.captions);
  o.vocab_size = 4;
  EXPECT_THROW(synth_copy_task(o), ConfigError);
}

TEST(Synth, NoiselessFramesAreTableRows) {
  SynthOptions o;
  o.seed = 3;
  o.n_samples = 20;
  o.noise = 0.0;
  const auto d = synth_copy_task(o);
  const auto vocab = synth_vocabulary(d);
  ASSERT_EQ(vocab.size(), o.vocab_size);
  for (const auto& rec : d.captions) {
    const auto ids = vocab.encode(rec.caption);
    ASSERT_EQ(ids.size(), o.seq_len);
    const Tensor& f = d.features.at(rec.video_id);
    ASSERT_EQ(f.shape(), (Shape{o.seq_len, o.feature_dim}));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      EXPECT_GE(ids[i], kNumReserved);
      for (std::size_t c = 0; c < o.feature_dim; ++c) EXPECT_EQ(f.at(i, c), d.table.at(ids[i], c));
    }
  }
}

TEST(Synth, NoiselessFeaturesAreLinearlySeparable) {
  // Least squares from frame features to token one-hots, solved through the
  // normal equations, must classify every training frame.
  SynthOptions o;
  o.seed = 8;
  o.n_samples = 40;
  o.noise = 0.0;
  o.feature_dim = 24;
  const auto d = synth_copy_task(o);
  const auto vocab = synth_vocabulary(d);
  std::vector<std::vector<double>> xs;
  std::vector<TokenId> ys;
  for (const auto& rec : d.captions) {
    const auto ids = vocab.encode(rec.caption);
    const Tensor& f = d.features.at(rec.video_id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      xs.emplace_back(f.row(i).begin(), f.row(i).end());
      ys.push_back(ids[i]);
    }
  }
  const std::size_t D = o.feature_dim, V = o.vocab_size;
  std::vector<std::vector<long double>> gram(D, std::vector<long double>(D, 0.0L));
  for (const auto& x : xs)
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) gram[a][b] += static_cast<long double>(x[a]) * x[b];
  std::vector<std::vector<long double>> w(V);
  for (std::size_t v = 0; v < V; ++v) {
    std::vector<long double> rhs(D, 0.0L);
    for (std::size_t n = 0; n < xs.size(); ++n)
      if (ys[n] == v)
        for (std::size_t a = 0; a < D; ++a) rhs[a] += xs[n][a];
    w[v] = solve(gram, rhs);
  }
  std::size_t correct = 0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    TokenId best = 0;
    long double best_score = -1e300L;
    for (std::size_t v = 0; v < V; ++v) {
      long double s = 0.0L;
      for (std::size_t a = 0; a < D; ++a) s += w[v][a] * xs[n][a];
      if (s > best_score) {
        best_score = s;
        best = v;
      }
    }
    correct += best == ys[n];
  }
  EXPECT_EQ(correct, xs.size());
}
