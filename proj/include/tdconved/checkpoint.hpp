#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tdconved/model.hpp"

namespace tdconved {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///
///   "TDCK"                      4-byte magic
///   u32 version                 currently 1
///   u32 n, n bytes              model dimensions as JSON
///   u32 n, n bytes              full run configuration as JSON (echo only)
///   u64 vocabulary hash
///   u32 tensor count
///   per tensor:
///     u32 n, n bytes            parameter name, e.g. "decoder.word_emb"
///     u32 rank, rank × u32      shape
///     numel × f64               values, row-major
///
/// Tensors appear in named_parameters order; loading matches them by name
/// and shape against the structure implied by the stored dimensions.
struct Checkpoint {
  ModelParams params;
  std::string config_json;
  std::uint64_t vocab_hash = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const std::string& config_json,
                                               std::uint64_t vocab_hash);
/// Throws FormatError (with byte offset) on any structural problem.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& config_json,
                     std::uint64_t vocab_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tdconved
