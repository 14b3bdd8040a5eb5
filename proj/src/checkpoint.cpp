#include "tdconved/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "tdconved/config.hpp"
#include "tdconved/errors.hpp"

namespace tdconved {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'C', 'K'};

class Writer {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    if (s.size() > UINT32_MAX) throw CapacityError("checkpoint: string too long");
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint: truncated ") + what, pos_);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    auto s = take(n, what);
    return std::string(s.begin(), s.end());
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const std::string& config_json,
                                               std::uint64_t vocab_hash) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(dims_to_json(params.dims).dump());
  w.str(config_json);
  w.u64(vocab_hash);
  const auto named = named_parameters(params);
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t e : tensor->shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : tensor->values()) w.u64(std::bit_cast<std::uint64_t>(v));
  }
  return std::move(w.out);
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("checkpoint: bad magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), version_at);
  }

  const std::size_t dims_at = r.offset();
  ModelDims dims;
  try {
    dims = dims_from_json(nlohmann::json::parse(r.str("dimensions")));
    validate(dims);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad dimensions: ") + e.what(), dims_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad dimensions: ") + e.what(), dims_at);
  }

  Checkpoint ck;
  ck.config_json = r.str("config");
  ck.vocab_hash = r.u64("vocabulary hash");
  ck.params = make_model(dims, 0);
  auto named = named_parameters(ck.params);

  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("tensor count");
  if (count != named.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(named.size()) + " tensors, found " +
                          std::to_string(count),
                      count_at);
  }
  for (auto& [name, tensor] : named) {
    const std::size_t at = r.offset();
    const std::string stored = r.str("tensor name");
    if (stored != name) throw FormatError("checkpoint: expected tensor '" + name + "', found '" + stored + "'", at);
    const std::size_t shape_at = r.offset();
    const std::uint32_t rank = r.u32("rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("shape"));
    if (shape != tensor->shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_to_string(shape) + ", expected " +
                            shape_to_string(tensor->shape()),
                        shape_at);
    }
    for (double& v : tensor->values()) {
      const std::size_t value_at = r.offset();
      v = std::bit_cast<double>(r.u64("tensor values"));
      if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite value in '" + name + "'", value_at);
    }
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes", r.offset());
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& config_json,
                     std::uint64_t vocab_hash) {
  const auto bytes = serialize_checkpoint(params, config_json, vocab_hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace tdconved
