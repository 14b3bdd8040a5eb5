#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdconved/attention.hpp"
#include "tdconved/decoder.hpp"
#include "tdconved/encoder.hpp"
#include "tdconved/special_tokens.hpp"

namespace tdconved {

/// Model variants, from the ablations of the full architecture:
///  - MeanPool ("td1"): projected features mean-pooled into the decoder, no
///    deformable blocks and no attention.
///  - Encoder ("td2"): deformable encoder, no attention.
///  - Full ("full"): deformable encoder and temporal attention.
enum class Variant { MeanPool, Encoder, Full };

std::string variant_name(Variant v);
/// Accepts "td1", "td2", "full". Throws ConfigError otherwise.
Variant parse_variant(const std::string& name);

struct ModelDims {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 512;    // D_v
  std::size_t encoder_dim = 512;    // D_r
  std::size_t decoder_dim = 512;    // D_f
  std::size_t attention_dim = 512;  // D_a
  std::size_t embed_dim = 512;      // D_w
  std::size_t kernel_size = 3;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  std::size_t max_length = 32;  // T_max
  Variant variant = Variant::Full;

  bool operator==(const ModelDims&) const = default;
};

/// Throws ConfigError for even k, zero dims or zero blocks where required.
void validate(const ModelDims& dims);

struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  DecoderParams decoder;
  std::optional<AttentionParams> attention;  // Full only
  std::optional<Linear> video_out;           // W_c: D_r -> D_f, Full only
  Linear out_head;                           // D_f -> V
};

ModelParams make_model(const ModelDims& dims, std::uint64_t seed);

struct ParamRef {
  std::string name;
  Tensor* tensor;
};
struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Every learnable tensor with a stable dotted name, e.g.
/// "encoder.block1.offset_weight". The order is fixed for a given dims.
std::vector<ParamRef> named_parameters(ModelParams& params);
std::vector<ConstParamRef> named_parameters(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

/// Same structure as `params`, every value zero.
ModelParams zeros_like(const ModelParams& params);
void set_zero(ModelParams& params);
/// dst += src, tensor by tensor in named_parameters order.
void accumulate(ModelParams& dst, const ModelParams& src);

struct ForwardCache {
  EncoderCache encoder;
  Tensor z;
  std::vector<double> video;  // z̃
  DecoderCache decoder;
  Tensor hidden;    // h [T, D_f]
  AttentionCache attention;
  Tensor attended;  // ẑ [T, D_r]
  Tensor combined;  // head input [T, D_f]
};

/// Teacher-forced logits [T, V]: logits_t = out_head(h_t + W_c·ẑ_t + b_c)
/// for Full, out_head(h_t) otherwise. All steps are computed in one pass.
Tensor forward_train(const ModelParams& params, const Tensor& features, std::span<const TokenId> tokens_in,
                     ForwardCache* cache = nullptr, std::size_t threads = 1);

/// Decoder, attention and head given precomputed context vectors z.
Tensor logits_from_encoding(const ModelParams& params, const Tensor& z, std::span<const TokenId> tokens_in,
                            ForwardCache* cache = nullptr, std::size_t threads = 1);

/// Accumulates dL/dparams into `grads` for the pass recorded in `cache`.
void backward(const ModelParams& params, const ForwardCache& cache, const Tensor& dlogits, ModelParams& grads);

/// Sum of cross-entropy over positions whose target is not `pad`.
double sequence_loss(const Tensor& logits, std::span<const TokenId> targets, TokenId pad = kPadToken);
/// Gradient of sequence_loss with respect to the logits, scaled by `scale`.
Tensor sequence_loss_grad(const Tensor& logits, std::span<const TokenId> targets, TokenId pad = kPadToken,
                          double scale = 1.0);

/// Per-video decoding context: encodes once, then produces next-token logits
/// one step at a time through the incremental decoder.
class InferenceContext {
 public:
  InferenceContext(const ModelParams& params, const Tensor& features);
  static InferenceContext from_encoding(const ModelParams& params, Tensor z);

  IncrementalState initial_state() const { return IncrementalState(params_->decoder); }

  /// Logits for the token following `token`, which is fed at step
  /// state.position(). Writes the attention row when requested and available.
  std::vector<double> step(TokenId token, IncrementalState& state,
                           std::vector<double>* attention_weights = nullptr) const;

  const Tensor& context() const { return z_; }
  const std::vector<double>& video() const { return video_; }

 private:
  InferenceContext(const ModelParams& params, Tensor z, int);

  const ModelParams* params_;
  Tensor z_;
  std::vector<double> video_;
  std::optional<AttentionMemory> memory_;
};

}  // namespace tdconved
