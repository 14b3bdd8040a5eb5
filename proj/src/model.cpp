#include "tdconved/model.hpp"

#include <string>
#include <type_traits>

#include "tdconved/errors.hpp"
#include "tdconved/rng.hpp"

namespace tdconved {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::MeanPool: return "td1";
    case Variant::Encoder: return "td2";
    case Variant::Full: return "full";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  if (name == "td1") return Variant::MeanPool;
  if (name == "td2") return Variant::Encoder;
  if (name == "full") return Variant::Full;
  throw ConfigError("unknown variant '" + name + "' (expected td1, td2 or full)");
}

void validate(const ModelDims& d) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be at least 1");
  };
  positive(d.vocab_size, "vocab_size");
  positive(d.feature_dim, "d_v");
  positive(d.encoder_dim, "d_r");
  positive(d.decoder_dim, "d_f");
  positive(d.attention_dim, "d_a");
  positive(d.embed_dim, "d_w");
  positive(d.max_length, "t_max");
  positive(d.decoder_blocks, "dec_blocks");
  if (d.kernel_size % 2 == 0) {
    throw ConfigError("kernel size k must be odd, got " + std::to_string(d.kernel_size));
  }
  if (d.variant != Variant::MeanPool && d.encoder_blocks == 0) {
    throw ConfigError("variant " + variant_name(d.variant) + " needs enc_blocks >= 1");
  }
  if (d.vocab_size <= kNumReserved) {
    throw ConfigError("vocab_size must exceed the " + std::to_string(kNumReserved) + " reserved tokens");
  }
}

ModelParams make_model(const ModelDims& dims, std::uint64_t seed) {
  validate(dims);
  Rng root(seed);
  Rng enc_rng = root.split();
  Rng dec_rng = root.split();
  Rng att_rng = root.split();
  Rng head_rng = root.split();

  ModelParams p;
  p.dims = dims;
  const std::size_t enc_blocks = dims.variant == Variant::MeanPool ? 0 : dims.encoder_blocks;
  p.encoder = make_encoder(dims.feature_dim, dims.encoder_dim, dims.kernel_size, enc_blocks, enc_rng);
  p.decoder = make_decoder(dims.vocab_size, dims.max_length, dims.encoder_dim, dims.embed_dim, dims.decoder_dim,
                           dims.kernel_size, dims.decoder_blocks, dec_rng);
  if (dims.variant == Variant::Full) {
    p.attention = make_attention(dims.encoder_dim, dims.decoder_dim, dims.attention_dim, att_rng);
    p.video_out = make_linear(dims.decoder_dim, dims.encoder_dim, head_rng);
  }
  p.out_head = make_linear(dims.vocab_size, dims.decoder_dim, head_rng);
  return p;
}

namespace {

template <class P, class Fn>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void visit(P& p, Fn&& fn) {
  fn("encoder.input_proj.weight", p.encoder.input_proj.weight);
  fn("encoder.input_proj.bias", p.encoder.input_proj.bias);
  for (std::size_t b = 0; b < p.encoder.blocks.size(); ++b) {
    const std::string prefix = "encoder.block" + std::to_string(b) + ".";
    fn(prefix + "offset_weight", p.encoder.blocks[b].offset_weight);
    fn(prefix + "offset_bias", p.encoder.blocks[b].offset_bias);
    fn(prefix + "conv_weight", p.encoder.blocks[b].conv_weight);
    fn(prefix + "conv_bias", p.encoder.blocks[b].conv_bias);
  }
  fn("decoder.word_emb", p.decoder.word_emb);
  fn("decoder.pos_emb", p.decoder.pos_emb);
  fn("decoder.video_map.weight", p.decoder.video_map.weight);
  fn("decoder.video_map.bias", p.decoder.video_map.bias);
  fn("decoder.input_proj.weight", p.decoder.input_proj.weight);
  fn("decoder.input_proj.bias", p.decoder.input_proj.bias);
  for (std::size_t b = 0; b < p.decoder.blocks.size(); ++b) {
    const std::string prefix = "decoder.block" + std::to_string(b) + ".";
    fn(prefix + "weight", p.decoder.blocks[b].weight);
    fn(prefix + "bias", p.decoder.blocks[b].bias);
  }
  if (p.attention) {
    fn("attention.score_weight", p.attention->score_weight);
    fn("attention.context_weight", p.attention->context_weight);
    fn("attention.query_weight", p.attention->query_weight);
    fn("attention.bias", p.attention->bias);
  }
  if (p.video_out) {
    fn("head.video_out.weight", p.video_out->weight);
    fn("head.video_out.bias", p.video_out->bias);
  }
  fn("head.out.weight", p.out_head.weight);
  fn("head.out.bias", p.out_head.bias);
}

}  // namespace

std::vector<ParamRef> named_parameters(ModelParams& params) {
  std::vector<ParamRef> out;
  visit(params, [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<ConstParamRef> named_parameters(const ModelParams& params) {
  std::vector<ConstParamRef> out;
  visit(params, [&](const std::string& name, const Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& ref : named_parameters(params)) n += ref.tensor->numel();
  return n;
}

void set_zero(ModelParams& params) {
  for (auto& ref : named_parameters(params)) ref.tensor->fill(0.0);
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  set_zero(z);
  return z;
}

void accumulate(ModelParams& dst, const ModelParams& src) {
  auto d = named_parameters(dst);
  auto s = named_parameters(src);
  if (d.size() != s.size()) throw ShapeError("accumulate: parameter sets differ");
  for (std::size_t i = 0; i < d.size(); ++i) {
    require_shape(*s[i].tensor, d[i].tensor->shape(), d[i].name.c_str());
    axpy(1.0, s[i].tensor->values(), d[i].tensor->values());
  }
}

Tensor logits_from_encoding(const ModelParams& params, const Tensor& z, std::span<const TokenId> tokens_in,
                            ForwardCache* cache, std::size_t threads) {
  if (tokens_in.size() > params.dims.max_length) {
    throw CapacityError("sequence of " + std::to_string(tokens_in.size()) + " steps exceeds t_max=" +
                        std::to_string(params.dims.max_length));
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.z = z;
  c.video = mean_pool(z);
  c.hidden = decode_hidden(tokens_in, c.video, params.decoder, &c.decoder, threads);
  if (params.attention) {
    c.attended = attend_all(z, c.hidden, *params.attention, &c.attention, threads);
    Tensor mapped = affine_rows(*params.video_out, c.attended, threads);
    c.combined = c.hidden;
    axpy(1.0, mapped.values(), c.combined.values());
  } else {
    c.combined = c.hidden;
  }
  return affine_rows(params.out_head, c.combined, threads);
}

Tensor forward_train(const ModelParams& params, const Tensor& features, std::span<const TokenId> tokens_in,
                     ForwardCache* cache, std::size_t threads) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  Tensor z = encode(features, params.encoder, &c.encoder);
  return logits_from_encoding(params, z, tokens_in, &c, threads);
}

void backward(const ModelParams& params, const ForwardCache& cache, const Tensor& dlogits, ModelParams& grads) {
  require_shape(dlogits, {cache.combined.rows(), params.dims.vocab_size}, "backward dlogits");
  Tensor dcombined(cache.combined.shape());
  affine_rows_backward(params.out_head, cache.combined, dlogits, &dcombined, grads.out_head);

  Tensor dz(cache.z.shape());
  Tensor dh = dcombined;
  if (params.attention) {
    Tensor dattended(cache.attended.shape());
    affine_rows_backward(*params.video_out, cache.attended, dcombined, &dattended, *grads.video_out);
    attend_all_backward(*params.attention, cache.attention, dattended, dz, dh, *grads.attention);
  }
  const auto dvideo = decode_backward(params.decoder, cache.decoder, dh, grads.decoder);
  mean_pool_backward(dvideo, dz);
  encode_backward(params.encoder, cache.encoder, dz, grads.encoder);
}

double sequence_loss(const Tensor& logits, std::span<const TokenId> targets, TokenId pad) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw ShapeError("sequence_loss: logits " + shape_to_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad) continue;
    total += cross_entropy(logits.row(t), targets[t]);
  }
  return total;
}

Tensor sequence_loss_grad(const Tensor& logits, std::span<const TokenId> targets, TokenId pad, double scale) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw ShapeError("sequence_loss_grad: logits " + shape_to_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  Tensor d(logits.shape());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad) continue;
    auto row = d.row(t);
    cross_entropy_backward(logits.row(t), targets[t], row);
    if (scale != 1.0) {
      for (double& v : row) v *= scale;
    }
  }
  return d;
}

InferenceContext::InferenceContext(const ModelParams& params, Tensor z, int)
    : params_(&params), z_(std::move(z)), video_(mean_pool(z_)) {
  if (params.attention) memory_ = make_attention_memory(z_, *params.attention);
}

InferenceContext::InferenceContext(const ModelParams& params, const Tensor& features)
    : InferenceContext(params, encode(features, params.encoder), 0) {}

InferenceContext InferenceContext::from_encoding(const ModelParams& params, Tensor z) {
  return InferenceContext(params, std::move(z), 0);
}

std::vector<double> InferenceContext::step(TokenId token, IncrementalState& state,
                                           std::vector<double>* attention_weights) const {
  const ModelParams& p = *params_;
  const std::size_t t = state.position();
  if (t >= p.dims.max_length) {
    throw CapacityError("decode step " + std::to_string(t) + " exceeds t_max=" + std::to_string(p.dims.max_length));
  }
  std::vector<double> h = decode_step(token, t, video_, state, p.decoder);
  if (memory_) {
    AttentionResult att = attend(*memory_, h, *p.attention);
    std::vector<double> mapped(h.size());
    affine(p.video_out->weight, p.video_out->bias, att.context, mapped);
    for (std::size_t c = 0; c < h.size(); ++c) h[c] += mapped[c];
    if (attention_weights) *attention_weights = std::move(att.weights);
  } else if (attention_weights) {
    attention_weights->clear();
  }
  std::vector<double> logits(p.dims.vocab_size);
  affine(p.out_head.weight, p.out_head.bias, h, logits);
  return logits;
}

}  // namespace tdconved
