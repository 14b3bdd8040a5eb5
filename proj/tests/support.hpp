#pragma once

// Helpers shared by the unit tests: random fixtures and scalar reference
// implementations written independently of the library kernels.

#include <cmath>
#include <cstddef>
#include <vector>

#include "tdconved/rng.hpp"
#include "tdconved/tensor.hpp"

namespace testing_support {

using tdconved::Rng;
using tdconved::Tensor;

inline Tensor random_tensor(tdconved::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  return max_abs_diff(std::vector<double>(a.values().begin(), a.values().end()),
                      std::vector<double>(b.values().begin(), b.values().end()));
}

/// y = W x + b by naive nested loops.
inline std::vector<double> naive_affine(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
  std::vector<double> y(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    long double s = b[j];
    for (std::size_t i = 0; i < w.cols(); ++i) s += static_cast<long double>(w.at(j, i)) * x[i];
    y[j] = static_cast<double>(s);
  }
  return y;
}

inline double naive_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// GLU on a 2D vector: first half times sigmoid of the second half.
inline std::vector<double> naive_glu(const std::vector<double>& o) {
  const std::size_t d = o.size() / 2;
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = o[i] * naive_sigmoid(o[d + i]);
  return out;
}

/// Triangular kernel sum over every integral position of `seq` rows.
inline std::vector<double> kernel_sum(const Tensor& seq, double pos) {
  std::vector<double> out(seq.cols(), 0.0);
  for (std::size_t s = 0; s < seq.rows(); ++s) {
    const double w = std::max(0.0, 1.0 - std::abs(static_cast<double>(s) - pos));
    for (std::size_t c = 0; c < seq.cols(); ++c) out[c] += w * seq.at(s, c);
  }
  return out;
}

inline std::vector<double> row_vec(const Tensor& t, std::size_t r) {
  return std::vector<double>(t.row(r).begin(), t.row(r).end());
}

}  // namespace testing_support

#include "tdconved/tdconv.hpp"

namespace testing_support {

/// Deformable block computed by scalar arithmetic on an explicitly padded
/// sequence. With `use_offsets` false the taps are read at integral
/// positions, giving a plain k-tap convolution block.
inline Tensor oracle_deform_block(const Tensor& x, const tdconved::DeformConvParams& p, bool use_offsets = true,
                                  Tensor* offsets_out = nullptr) {
  const std::size_t L = x.rows(), D = x.cols();
  const std::size_t k = p.offset_bias.numel(), h = (k - 1) / 2;
  Tensor padded({L + 2 * h, D});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < D; ++c) padded.at(i + h, c) = x.at(i, c);

  Tensor out({L, D});
  if (offsets_out) *offsets_out = Tensor({L, k});
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> window;
    for (std::size_t n = 0; n < k; ++n)
      for (std::size_t c = 0; c < D; ++c) window.push_back(padded.at(i + n, c));
    std::vector<double> sampled;
    for (std::size_t n = 0; n < k; ++n) {
      double off = 0.0;
      if (use_offsets) {
        off = p.offset_bias[n];
        for (std::size_t j = 0; j < k * D; ++j) off += p.offset_weight.at(n, j) * window[j];
      }
      if (offsets_out) offsets_out->at(i, n) = off;
      const auto tap = use_offsets ? kernel_sum(padded, static_cast<double>(i + n) + off) : row_vec(padded, i + n);
      sampled.insert(sampled.end(), tap.begin(), tap.end());
    }
    const auto o = naive_affine(p.conv_weight, p.conv_bias, sampled);
    const auto g = naive_glu(o);
    for (std::size_t c = 0; c < D; ++c) out.at(i, c) = g[c] + x.at(i, c);
  }
  return out;
}

inline tdconved::DeformConvParams random_deform_params(std::size_t D, std::size_t k, Rng& rng,
                                                       double offset_scale) {
  tdconved::DeformConvParams p;
  p.offset_weight = random_tensor({k, k * D}, rng, offset_scale);
  p.offset_bias = random_tensor({k}, rng, offset_scale);
  p.conv_weight = random_tensor({2 * D, k * D}, rng);
  p.conv_bias = random_tensor({2 * D}, rng);
  return p;
}

inline double integer_gap(double v) {
  const double f = v - std::floor(v);
  return std::min(f, 1.0 - f);
}

}  // namespace testing_support
