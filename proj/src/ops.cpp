#include "tdconved/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tdconved/errors.hpp"
#include "tdconved/parallel.hpp"

namespace tdconved {

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const double* x = a.data();
  const double* y = b.data();
  double s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) s[l] += x[i + l] * y[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) s[l] += x[i] * y[i];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void affine(const Tensor& weight, const Tensor& bias, std::span<const double> x, std::span<double> y) {
  const std::size_t out = weight.rows();
  for (std::size_t j = 0; j < out; ++j) y[j] = dot(weight.row(j), x) + bias[j];
}

void affine_backward(const Tensor& weight, std::span<const double> x, std::span<const double> dy,
                     std::span<double> dx, Tensor& dweight, Tensor& dbias) {
  const std::size_t out = weight.rows();
  for (std::size_t j = 0; j < out; ++j) {
    const double g = dy[j];
    if (g == 0.0) continue;
    dbias[j] += g;
    axpy(g, x, dweight.row(j));
    if (!dx.empty()) axpy(g, weight.row(j), dx);
  }
}

void glu(std::span<const double> in, std::span<double> out) {
  const std::size_t d = out.size();
  for (std::size_t i = 0; i < d; ++i) out[i] = in[i] * sigmoid(in[d + i]);
}

void glu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din) {
  const std::size_t d = dout.size();
  for (std::size_t i = 0; i < d; ++i) {
    const double s = sigmoid(in[d + i]);
    din[i] = dout[i] * s;
    din[d + i] = dout[i] * in[i] * s * (1.0 - s);
  }
}

void softmax(std::span<const double> v, std::span<double> out) {
  const double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    total += out[i];
  }
  for (double& x : out) x /= total;
}

void softmax_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dv) {
  double inner = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * dy[i];
  for (std::size_t i = 0; i < y.size(); ++i) dv[i] = y[i] * (dy[i] - inner);
}

void log_softmax(std::span<const double> v, std::span<double> out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double total = 0.0;
  for (double x : v) total += std::exp(x - m);
  const double lse = m + std::log(total);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
}

void init_uniform_fan_in(Tensor& weight, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(weight.cols()));
  for (double& w : weight.values()) w = rng.uniform(-bound, bound);
}

Linear make_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  Linear layer{Tensor({out_dim, in_dim}), Tensor({out_dim})};
  init_uniform_fan_in(layer.weight, rng);
  return layer;
}

namespace {

/// Four dot products sharing one weight row; each result is bitwise equal to
/// dot(w, x[q]).
void dot4(std::span<const double> w, const double* const x[4], double out[4]) {
  const std::size_t n = w.size();
  const double* ws = w.data();
  double s[4][8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t q = 0; q < 4; ++q) {
      for (std::size_t l = 0; l < 8; ++l) s[q][l] += ws[i + l] * x[q][i + l];
    }
  }
  for (std::size_t l = 0; i < n; ++i, ++l) {
    for (std::size_t q = 0; q < 4; ++q) s[q][l] += ws[i] * x[q][i];
  }
  for (std::size_t q = 0; q < 4; ++q) {
    out[q] = ((s[q][0] + s[q][1]) + (s[q][2] + s[q][3])) + ((s[q][4] + s[q][5]) + (s[q][6] + s[q][7]));
  }
}

}  // namespace

Tensor affine_rows(const Linear& layer, const Tensor& x, std::size_t threads) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("affine_rows: input " + shape_to_string(x.shape()) + " vs weight " +
                     shape_to_string(layer.weight.shape()));
  }
  const std::size_t rows = x.rows();
  const std::size_t out = layer.out_dim();
  Tensor y({rows, out});
  // Blocks of output units are swept across all rows so a slab of the weight
  // matrix stays cache-resident; each element is still dot(W[j], x[r]) + b[j].
  constexpr std::size_t kBlock = 16;
  const std::size_t blocks = (out + kBlock - 1) / kBlock;
  parallel_for(blocks, rows > 1 ? threads : 1, [&](std::size_t blk) {
    const std::size_t j0 = blk * kBlock;
    const std::size_t j1 = std::min(out, j0 + kBlock);
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
      const double* xs[4] = {x.row(r).data(), x.row(r + 1).data(), x.row(r + 2).data(), x.row(r + 3).data()};
      double d[4];
      for (std::size_t j = j0; j < j1; ++j) {
        dot4(layer.weight.row(j), xs, d);
        for (std::size_t q = 0; q < 4; ++q) y.at(r + q, j) = d[q] + layer.bias[j];
      }
    }
    for (; r < rows; ++r) {
      const auto xr = x.row(r);
      for (std::size_t j = j0; j < j1; ++j) y.at(r, j) = dot(layer.weight.row(j), xr) + layer.bias[j];
    }
  });
  return y;
}

void affine_rows_backward(const Linear& layer, const Tensor& x, const Tensor& dy, Tensor* dx, Linear& grads) {
  const std::size_t rows = x.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    affine_backward(layer.weight, x.row(r), dy.row(r), dx ? dx->row(r) : std::span<double>{}, grads.weight,
                    grads.bias);
  }
}

namespace {

void check_linear_shapes(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 1 || weight.rank() != 2 || bias.rank() != 1 || weight.cols() != x.numel() ||
      weight.rows() != bias.numel()) {
    throw ShapeError("linear: x " + shape_to_string(x.shape()) + ", W " + shape_to_string(weight.shape()) +
                     ", b " + shape_to_string(bias.shape()) + " do not agree");
  }
}

}  // namespace

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_linear_shapes(x, weight, bias);
  Tensor y({weight.rows()});
  affine(weight, bias, x.values(), y.values());
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dy) {
  if (dy.rank() != 1 || dy.numel() != weight.rows()) {
    throw ShapeError("linear_backward: dy " + shape_to_string(dy.shape()) + " vs W " +
                     shape_to_string(weight.shape()));
  }
  check_linear_shapes(x, weight, Tensor({weight.rows()}));
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({weight.rows()})};
  affine_backward(weight, x.values(), dy.values(), g.dx.values(), g.dweight, g.dbias);
  return g;
}

Tensor glu(const Tensor& o) {
  if (o.rank() != 1 || o.numel() % 2 != 0) {
    throw ShapeError("glu: feature extent must be even, got " + shape_to_string(o.shape()));
  }
  Tensor out({o.numel() / 2});
  glu(o.values(), out.values());
  return out;
}

Tensor glu_backward(const Tensor& o, const Tensor& dy) {
  if (o.rank() != 1 || o.numel() % 2 != 0 || dy.numel() * 2 != o.numel()) {
    throw ShapeError("glu_backward: o " + shape_to_string(o.shape()) + ", dy " + shape_to_string(dy.shape()));
  }
  Tensor din(o.shape());
  glu_backward(o.values(), dy.values(), din.values());
  return din;
}

Tensor softmax(const Tensor& v) {
  Tensor out(v.shape());
  softmax(v.values(), out.values());
  return out;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_shape(dy, y.shape(), "softmax_backward");
  Tensor dv(y.shape());
  softmax_backward(y.values(), dy.values(), dv.values());
  return dv;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside vocabulary of " +
                     std::to_string(logits.size()));
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - m);
  return m + std::log(total) - logits[target];
}

double cross_entropy(const Tensor& logits, std::size_t target) { return cross_entropy(logits.values(), target); }

void cross_entropy_backward(std::span<const double> logits, std::size_t target, std::span<double> dlogits) {
  if (target >= logits.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside vocabulary of " +
                     std::to_string(logits.size()));
  }
  softmax(logits, dlogits);
  dlogits[target] -= 1.0;
}

Tensor cross_entropy_backward(const Tensor& logits, std::size_t target) {
  Tensor d(logits.shape());
  cross_entropy_backward(logits.values(), target, d.values());
  return d;
}

}  // namespace tdconved
