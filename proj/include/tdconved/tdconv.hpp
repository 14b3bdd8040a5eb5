#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tdconved/rng.hpp"
#include "tdconved/tensor.hpp"

namespace tdconved {

/// One learned scalar offset per kernel tap, shared across channels.
struct TapOffsets {
  std::vector<double> values;
};

/// Parameters of one temporal deformable convolution block with kernel size
/// k over D channels.
struct DeformConvParams {
  Tensor offset_weight;  // [k, k·D]
  Tensor offset_bias;    // [k]
  Tensor conv_weight;    // [2·D, k·D]
  Tensor conv_bias;      // [2·D]

  std::size_t kernel_size() const { return offset_bias.numel(); }
  std::size_t channels() const { return conv_weight.rows() / 2; }
};

/// Convolution branch uniform in ±sqrt(1/(k·D)); the offset branch starts at
/// zero so a fresh block is exactly a standard temporal convolution.
DeformConvParams make_deform_conv(std::size_t channels, std::size_t kernel_size, Rng& rng);

/// Throws ShapeError if the tensors are inconsistent or k is even.
void validate(const DeformConvParams& params);

/// Relative tap positions {−(k−1)/2, …, 0, …, (k−1)/2}.
std::vector<long> tap_positions(std::size_t kernel_size);

/// Offsets for one window of k consecutive input vectors ([k, D]).
TapOffsets predict_offsets(const Tensor& window, const DeformConvParams& params);

/// Linear interpolation of a sequence [L, D] at a real position:
/// sum over integral s of max(0, 1 − |s − pos|) · seq[s]. Positions outside
/// [0, L−1] see zero vectors, so out-of-range mass is dropped.
std::vector<double> interp(const Tensor& seq, double pos);
void interp_into(const Tensor& seq, double pos, std::span<double> out);

/// interp(seq, center + r_tap + offsets[tap]), tap in [0, k).
std::vector<double> deformable_tap(const Tensor& seq, long center, std::size_t tap, const TapOffsets& offsets);

/// Intermediates of deform_conv_forward kept for the backward pass.
struct DeformConvCache {
  Tensor windows;   // [L, k·D]  zero-padded input windows
  Tensor offsets;   // [L, k]
  Tensor sampled;   // [L, k·D]  interpolated taps
  Tensor pre_gate;  // [L, 2·D]
};

/// p_i = glu(W_d · [taps at i + r_n + Δr_n] + b_d) + x_i for every i; the
/// input is zero-padded by (k−1)/2 on both sides, so output length equals
/// input length.
Tensor deform_conv_block(const Tensor& seq, const DeformConvParams& params);
Tensor deform_conv_forward(const Tensor& seq, const DeformConvParams& params, DeformConvCache* cache);

/// Accumulates into `dseq` ([L, D]) and `grads` (same shapes as params).
///
/// The derivative of the interpolation with respect to a sampling position
/// is taken on the cell [floor(pos), floor(pos) + 1]: x[p0 + 1] − x[p0]. At
/// integral positions this is the right derivative, which keeps a zero-offset
/// block trainable.
void deform_conv_backward(const Tensor& seq, const DeformConvParams& params, const DeformConvCache& cache,
                          const Tensor& dout, Tensor& dseq, DeformConvParams& grads);

}  // namespace tdconved
