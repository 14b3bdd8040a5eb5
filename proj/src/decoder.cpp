#include "tdconved/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdconved/errors.hpp"
#include "tdconved/parallel.hpp"

namespace tdconved {

DecoderParams make_decoder(std::size_t vocab_size, std::size_t max_length, std::size_t video_dim,
                           std::size_t embed_dim, std::size_t state_dim, std::size_t kernel_size,
                           std::size_t num_blocks, Rng& rng) {
  if (kernel_size == 0) throw ConfigError("decoder kernel size must be positive");
  DecoderParams p;
  p.kernel_size = kernel_size;
  // Embedding rows are lookups of one-hot inputs, so their fan-in is 1.
  p.word_emb = Tensor({vocab_size, embed_dim});
  for (double& w : p.word_emb.values()) w = rng.uniform(-1.0, 1.0);
  p.pos_emb = Tensor({max_length, embed_dim});
  for (double& w : p.pos_emb.values()) w = rng.uniform(-1.0, 1.0);
  p.video_map = make_linear(embed_dim, video_dim, rng);
  p.input_proj = make_linear(state_dim, 2 * embed_dim, rng);
  for (std::size_t b = 0; b < num_blocks; ++b) {
    ShiftedConvParams block{Tensor({2 * state_dim, kernel_size * state_dim}), Tensor({2 * state_dim})};
    init_uniform_fan_in(block.weight, rng);
    p.blocks.push_back(std::move(block));
  }
  return p;
}

namespace {

void check_token(TokenId token, std::size_t t, const DecoderParams& params) {
  if (token >= params.vocab_size()) {
    throw IndexError("decoder: token " + std::to_string(token) + " outside vocabulary of " +
                     std::to_string(params.vocab_size()));
  }
  if (t >= params.max_length()) {
    throw CapacityError("decoder: step " + std::to_string(t) + " exceeds position table of " +
                        std::to_string(params.max_length()));
  }
}

void check_video(std::span<const double> video, const DecoderParams& params) {
  if (video.size() != params.video_dim()) {
    throw ShapeError("decoder: video vector of " + std::to_string(video.size()) + " values, expected " +
                     std::to_string(params.video_dim()));
  }
}

void check_block(const ShiftedConvParams& block, std::size_t dim, std::size_t k) {
  require_shape(block.weight, {2 * dim, k * dim}, "shifted conv weight");
  require_shape(block.bias, {2 * dim}, "shifted conv bias");
}

// concat = [word_emb[token] + pos_emb[t], mapped]
void fill_input(TokenId token, std::size_t t, std::span<const double> mapped, const DecoderParams& params,
                std::span<double> concat) {
  const std::size_t dw = params.embed_dim();
  auto w = params.word_emb.row(token);
  auto p = params.pos_emb.row(t);
  for (std::size_t c = 0; c < dw; ++c) concat[c] = w[c] + p[c];
  std::copy(mapped.begin(), mapped.end(), concat.begin() + static_cast<std::ptrdiff_t>(dw));
}

void shifted_row(const ShiftedConvParams& block, std::span<const double> window, std::span<const double> x,
                 std::span<double> pre, std::span<double> out) {
  affine(block.weight, block.bias, window, pre);
  glu(pre, out);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += x[c];
}

std::vector<double> map_video(std::span<const double> video, const DecoderParams& params) {
  check_video(video, params);
  std::vector<double> mapped(params.embed_dim());
  affine(params.video_map.weight, params.video_map.bias, video, mapped);
  return mapped;
}

}  // namespace

std::vector<double> embed_step(TokenId token, std::size_t t, std::span<const double> video,
                               const DecoderParams& params) {
  check_token(token, t, params);
  const auto mapped = map_video(video, params);
  std::vector<double> concat(2 * params.embed_dim());
  fill_input(token, t, mapped, params, concat);
  std::vector<double> out(params.state_dim());
  affine(params.input_proj.weight, params.input_proj.bias, concat, out);
  return out;
}

Tensor shifted_conv_block(const Tensor& seq, const ShiftedConvParams& block, std::size_t kernel_size) {
  if (seq.rank() != 2) throw ShapeError("shifted_conv_block: input must be [T, D]");
  const std::size_t len = seq.rows();
  const std::size_t d = seq.cols();
  check_block(block, d, kernel_size);
  Tensor out({len, d});
  std::vector<double> window(kernel_size * d);
  std::vector<double> pre(2 * d);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t n = 0; n < kernel_size; ++n) {
      const long s = static_cast<long>(t) - static_cast<long>(kernel_size - 1 - n);
      auto dst = std::span<double>(window).subspan(n * d, d);
      if (s < 0) {
        std::fill(dst.begin(), dst.end(), 0.0);
      } else {
        auto src = seq.row(static_cast<std::size_t>(s));
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    shifted_row(block, window, seq.row(t), pre, out.row(t));
  }
  return out;
}

Tensor decode_hidden(std::span<const TokenId> tokens, std::span<const double> video, const DecoderParams& params,
                     DecoderCache* cache, std::size_t threads) {
  if (tokens.empty()) throw ContractError("decode_hidden: empty token row");
  const std::size_t len = tokens.size();
  const std::size_t dw = params.embed_dim();
  const std::size_t df = params.state_dim();
  const std::size_t k = params.kernel_size;
  for (std::size_t t = 0; t < len; ++t) check_token(tokens[t], t, params);
  for (const auto& block : params.blocks) check_block(block, df, k);

  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.video.assign(video.begin(), video.end());
  c.video_mapped = map_video(video, params);
  c.inputs = Tensor({len, 2 * dw});
  for (std::size_t t = 0; t < len; ++t) fill_input(tokens[t], t, c.video_mapped, params, c.inputs.row(t));
  Tensor x = affine_rows(params.input_proj, c.inputs, threads);

  c.block_inputs.clear();
  c.windows.clear();
  c.pre_gates.clear();
  for (const auto& block : params.blocks) {
    Tensor window({len, k * df});
    Tensor pre({len, 2 * df});
    Tensor out({len, df});
    parallel_for(len, threads, [&](std::size_t t) {
      auto w = window.row(t);
      for (std::size_t n = 0; n < k; ++n) {
        const long s = static_cast<long>(t) - static_cast<long>(k - 1 - n);
        if (s < 0) continue;  // rows start zeroed
        auto src = x.row(static_cast<std::size_t>(s));
        std::copy(src.begin(), src.end(), w.begin() + static_cast<std::ptrdiff_t>(n * df));
      }
      shifted_row(block, w, x.row(t), pre.row(t), out.row(t));
    });
    c.block_inputs.push_back(std::move(x));
    c.windows.push_back(std::move(window));
    c.pre_gates.push_back(std::move(pre));
    x = std::move(out);
  }
  return x;
}

std::vector<double> decode_backward(const DecoderParams& params, const DecoderCache& cache, const Tensor& dh,
                                    DecoderParams& grads) {
  const std::size_t len = cache.tokens.size();
  const std::size_t dw = params.embed_dim();
  const std::size_t df = params.state_dim();
  const std::size_t k = params.kernel_size;
  require_shape(dh, {len, df}, "decode_backward dh");

  Tensor grad = dh;
  std::vector<double> dpre(2 * df);
  std::vector<double> dwindow(k * df);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    Tensor dinput({len, df});
    for (std::size_t t = 0; t < len; ++t) {
      auto g = grad.row(t);
      axpy(1.0, g, dinput.row(t));
      glu_backward(cache.pre_gates[b].row(t), g, dpre);
      std::fill(dwindow.begin(), dwindow.end(), 0.0);
      affine_backward(params.blocks[b].weight, cache.windows[b].row(t), dpre, dwindow, grads.blocks[b].weight,
                      grads.blocks[b].bias);
      for (std::size_t n = 0; n < k; ++n) {
        const long s = static_cast<long>(t) - static_cast<long>(k - 1 - n);
        if (s < 0) continue;
        axpy(1.0, std::span<const double>(dwindow.data() + n * df, df), dinput.row(static_cast<std::size_t>(s)));
      }
    }
    grad = std::move(dinput);
  }

  Tensor dinputs({len, 2 * dw});
  affine_rows_backward(params.input_proj, cache.inputs, grad, &dinputs, grads.input_proj);
  std::vector<double> dmapped(dw, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    auto d = dinputs.row(t);
    auto demb = d.first(dw);
    axpy(1.0, demb, grads.word_emb.row(cache.tokens[t]));
    axpy(1.0, demb, grads.pos_emb.row(t));
    axpy(1.0, d.subspan(dw, dw), dmapped);
  }
  std::vector<double> dvideo(params.video_dim(), 0.0);
  affine_backward(params.video_map.weight, cache.video, dmapped, dvideo, grads.video_map.weight,
                  grads.video_map.bias);
  return dvideo;
}

IncrementalState::IncrementalState(const DecoderParams& params)
    : history_(params.kernel_size - 1),
      dim_(params.state_dim()),
      rings_(params.blocks.size(), std::vector<double>(history_ * dim_, 0.0)) {}

std::span<const double> IncrementalState::past(std::size_t block, std::size_t age) const {
  if (age == 0 || age > history_ || age > position_) return {};
  const std::size_t slot = (position_ - age) % history_;
  return std::span<const double>(rings_[block]).subspan(slot * dim_, dim_);
}

void IncrementalState::record(std::size_t block, std::span<const double> input) {
  if (history_ == 0) return;
  const std::size_t slot = position_ % history_;
  std::copy(input.begin(), input.end(), rings_[block].begin() + static_cast<std::ptrdiff_t>(slot * dim_));
}

std::vector<double> decode_step(TokenId token, std::size_t t, std::span<const double> video,
                                IncrementalState& state, const DecoderParams& params) {
  if (state.position() != t) {
    throw ContractError("decode_step: state has consumed " + std::to_string(state.position()) +
                        " tokens but step " + std::to_string(t) + " was requested");
  }
  const std::size_t df = params.state_dim();
  const std::size_t k = params.kernel_size;
  std::vector<double> x = embed_step(token, t, video, params);
  std::vector<double> window(k * df);
  std::vector<double> pre(2 * df);
  std::vector<double> out(df);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (std::size_t n = 0; n + 1 < k; ++n) {
      auto src = state.past(b, k - 1 - n);
      auto dst = std::span<double>(window).subspan(n * df, df);
      if (src.empty()) {
        std::fill(dst.begin(), dst.end(), 0.0);
      } else {
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    std::copy(x.begin(), x.end(), window.begin() + static_cast<std::ptrdiff_t>((k - 1) * df));
    shifted_row(params.blocks[b], window, x, pre, out);
    state.record(b, x);
    x.swap(out);
  }
  state.advance();
  return x;
}

}  // namespace tdconved
