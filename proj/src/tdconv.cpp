#include "tdconved/tdconv.hpp"

#include <cmath>
#include <string>

#include "tdconved/errors.hpp"
#include "tdconved/ops.hpp"

namespace tdconved {

DeformConvParams make_deform_conv(std::size_t channels, std::size_t kernel_size, Rng& rng) {
  if (kernel_size % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(kernel_size));
  const std::size_t width = kernel_size * channels;
  DeformConvParams p{Tensor({kernel_size, width}), Tensor({kernel_size}), Tensor({2 * channels, width}),
                     Tensor({2 * channels})};
  init_uniform_fan_in(p.conv_weight, rng);
  return p;
}

void validate(const DeformConvParams& p) {
  const std::size_t k = p.offset_bias.numel();
  if (k == 0 || k % 2 == 0) throw ShapeError("deformable conv: kernel size must be odd, got " + std::to_string(k));
  if (p.conv_weight.rank() != 2 || p.conv_weight.rows() % 2 != 0) {
    throw ShapeError("deformable conv: conv weight " + shape_to_string(p.conv_weight.shape()) +
                     " must have an even number of rows");
  }
  const std::size_t d = p.conv_weight.rows() / 2;
  require_shape(p.offset_weight, {k, k * d}, "deformable conv offset weight");
  require_shape(p.offset_bias, {k}, "deformable conv offset bias");
  require_shape(p.conv_weight, {2 * d, k * d}, "deformable conv weight");
  require_shape(p.conv_bias, {2 * d}, "deformable conv bias");
}

std::vector<long> tap_positions(std::size_t kernel_size) {
  const long half = static_cast<long>(kernel_size / 2);
  std::vector<long> r;
  r.reserve(kernel_size);
  for (long n = -half; n <= half; ++n) r.push_back(n);
  return r;
}

namespace {

// Zero vector outside [0, L).
std::span<const double> row_or_empty(const Tensor& seq, long s) {
  if (s < 0 || s >= static_cast<long>(seq.rows())) return {};
  return seq.row(static_cast<std::size_t>(s));
}

struct Cell {
  long left;
  double frac;
};

Cell locate(double pos, std::size_t length) {
  if (!std::isfinite(pos)) throw ContractError("non-finite sampling position");
  // Anything at or beyond one step outside the sequence samples only zeros;
  // clamping here keeps the integer conversion in range.
  const double lo = -2.0;
  const double hi = static_cast<double>(length) + 1.0;
  if (pos < lo) return {static_cast<long>(lo), 0.0};
  if (pos > hi) return {static_cast<long>(hi), 0.0};
  const double fl = std::floor(pos);
  return {static_cast<long>(fl), pos - fl};
}

void gather_window(const Tensor& seq, long center, const std::vector<long>& taps, std::span<double> out) {
  const std::size_t d = seq.cols();
  for (std::size_t n = 0; n < taps.size(); ++n) {
    auto dst = out.subspan(n * d, d);
    auto src = row_or_empty(seq, center + taps[n]);
    for (std::size_t c = 0; c < d; ++c) dst[c] = src.empty() ? 0.0 : src[c];
  }
}

void check_input(const Tensor& seq, const DeformConvParams& params) {
  validate(params);
  if (seq.rank() != 2 || seq.cols() != params.channels()) {
    throw ShapeError("deformable conv: input " + shape_to_string(seq.shape()) + " vs " +
                     std::to_string(params.channels()) + " channels");
  }
}

}  // namespace

TapOffsets predict_offsets(const Tensor& window, const DeformConvParams& params) {
  validate(params);
  const std::size_t k = params.kernel_size();
  if (window.rank() != 2 || window.rows() != k || window.cols() != params.channels()) {
    throw ShapeError("predict_offsets: window " + shape_to_string(window.shape()) + " must be [" +
                     std::to_string(k) + "x" + std::to_string(params.channels()) + "]");
  }
  TapOffsets out{std::vector<double>(k)};
  affine(params.offset_weight, params.offset_bias, window.values(), out.values);
  return out;
}

void interp_into(const Tensor& seq, double pos, std::span<double> out) {
  const Cell cell = locate(pos, seq.rows());
  auto a = row_or_empty(seq, cell.left);
  auto b = row_or_empty(seq, cell.left + 1);
  const double wa = 1.0 - cell.frac;
  const double wb = cell.frac;
  for (std::size_t c = 0; c < out.size(); ++c) {
    double v = 0.0;
    if (!a.empty()) v += wa * a[c];
    if (!b.empty() && wb != 0.0) v += wb * b[c];
    out[c] = v;
  }
}

std::vector<double> interp(const Tensor& seq, double pos) {
  std::vector<double> out(seq.cols());
  interp_into(seq, pos, out);
  return out;
}

std::vector<double> deformable_tap(const Tensor& seq, long center, std::size_t tap, const TapOffsets& offsets) {
  const std::size_t k = offsets.values.size();
  if (tap >= k) {
    throw IndexError("deformable_tap: tap " + std::to_string(tap) + " outside kernel of size " + std::to_string(k));
  }
  const auto taps = tap_positions(k);
  return interp(seq, static_cast<double>(center + taps[tap]) + offsets.values[tap]);
}

Tensor deform_conv_forward(const Tensor& seq, const DeformConvParams& params, DeformConvCache* cache) {
  check_input(seq, params);
  const std::size_t len = seq.rows();
  const std::size_t d = params.channels();
  const std::size_t k = params.kernel_size();
  const auto taps = tap_positions(k);

  DeformConvCache local;
  DeformConvCache& c = cache ? *cache : local;
  c.windows = Tensor({len, k * d});
  c.offsets = Tensor({len, k});
  c.sampled = Tensor({len, k * d});
  c.pre_gate = Tensor({len, 2 * d});

  Tensor out({len, d});
  for (std::size_t i = 0; i < len; ++i) {
    const long center = static_cast<long>(i);
    auto window = c.windows.row(i);
    gather_window(seq, center, taps, window);
    auto offsets = c.offsets.row(i);
    affine(params.offset_weight, params.offset_bias, window, offsets);
    auto sampled = c.sampled.row(i);
    for (std::size_t n = 0; n < k; ++n) {
      interp_into(seq, static_cast<double>(center + taps[n]) + offsets[n], sampled.subspan(n * d, d));
    }
    auto pre = c.pre_gate.row(i);
    affine(params.conv_weight, params.conv_bias, sampled, pre);
    auto y = out.row(i);
    glu(pre, y);
    auto x = seq.row(i);
    for (std::size_t ch = 0; ch < d; ++ch) y[ch] += x[ch];
  }
  return out;
}

Tensor deform_conv_block(const Tensor& seq, const DeformConvParams& params) {
  return deform_conv_forward(seq, params, nullptr);
}

void deform_conv_backward(const Tensor& seq, const DeformConvParams& params, const DeformConvCache& cache,
                          const Tensor& dout, Tensor& dseq, DeformConvParams& grads) {
  const std::size_t len = seq.rows();
  const std::size_t d = params.channels();
  const std::size_t k = params.kernel_size();
  require_shape(dout, seq.shape(), "deform_conv_backward dout");
  require_shape(dseq, seq.shape(), "deform_conv_backward dseq");
  const auto taps = tap_positions(k);

  std::vector<double> dpre(2 * d);
  std::vector<double> dsampled(k * d);
  std::vector<double> doffsets(k);
  std::vector<double> dwindow(k * d);
  for (std::size_t i = 0; i < len; ++i) {
    const long center = static_cast<long>(i);
    auto g = dout.row(i);
    axpy(1.0, g, dseq.row(i));

    glu_backward(cache.pre_gate.row(i), g, dpre);
    std::fill(dsampled.begin(), dsampled.end(), 0.0);
    affine_backward(params.conv_weight, cache.sampled.row(i), dpre, dsampled, grads.conv_weight, grads.conv_bias);

    auto offsets = cache.offsets.row(i);
    for (std::size_t n = 0; n < k; ++n) {
      const Cell cell = locate(static_cast<double>(center + taps[n]) + offsets[n], len);
      std::span<const double> ds(dsampled.data() + n * d, d);
      auto a = row_or_empty(seq, cell.left);
      auto b = row_or_empty(seq, cell.left + 1);
      double dpos = 0.0;
      if (!a.empty()) {
        axpy(1.0 - cell.frac, ds, dseq.row(static_cast<std::size_t>(cell.left)));
        dpos -= dot(ds, a);
      }
      if (!b.empty()) {
        if (cell.frac != 0.0) axpy(cell.frac, ds, dseq.row(static_cast<std::size_t>(cell.left + 1)));
        dpos += dot(ds, b);
      }
      doffsets[n] = dpos;
    }

    std::fill(dwindow.begin(), dwindow.end(), 0.0);
    affine_backward(params.offset_weight, cache.windows.row(i), doffsets, dwindow, grads.offset_weight,
                    grads.offset_bias);
    for (std::size_t n = 0; n < k; ++n) {
      const long s = center + taps[n];
      if (s < 0 || s >= static_cast<long>(len)) continue;
      axpy(1.0, std::span<const double>(dwindow.data() + n * d, d), dseq.row(static_cast<std::size_t>(s)));
    }
  }
}

}  // namespace tdconved
