#pragma once

#include <cstddef>
#include <span>

#include "tdconved/rng.hpp"
#include "tdconved/tensor.hpp"

namespace tdconved {

// ---------------------------------------------------------------------------
// Span kernels. Every forward path routes through these, so a row computed
// inside a batched (teacher-forced) pass is bitwise identical to the same row
// computed one step at a time.
// ---------------------------------------------------------------------------

/// Fixed-order dot product (eight interleaved partial sums).
double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double sigmoid(double x);

/// y = W x + b, W is [out, in].
void affine(const Tensor& weight, const Tensor& bias, std::span<const double> x, std::span<double> y);
/// dx += Wᵀ dy (skipped when dx is empty), dW += dy xᵀ, db += dy.
void affine_backward(const Tensor& weight, std::span<const double> x, std::span<const double> dy,
                     std::span<double> dx, Tensor& dweight, Tensor& dbias);

/// out = A ⊗ σ(B) where in = [A, B]; out has half the length of in.
void glu(std::span<const double> in, std::span<double> out);
/// din = dL/d[A, B] given dout = dL/d(out). Overwrites din.
void glu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din);

void softmax(std::span<const double> v, std::span<double> out);
/// dv = y ⊗ (dy − ⟨y, dy⟩). Overwrites dv.
void softmax_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dv);
void log_softmax(std::span<const double> v, std::span<double> out);

// ---------------------------------------------------------------------------
// Affine layer
// ---------------------------------------------------------------------------

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Weights uniform in ±sqrt(1/in), zero bias.
Linear make_linear(std::size_t out_dim, std::size_t in_dim, Rng& rng);
void init_uniform_fan_in(Tensor& weight, Rng& rng);

/// Row-wise affine map of a sequence: X [L, in] -> [L, out].
Tensor affine_rows(const Linear& layer, const Tensor& x, std::size_t threads = 1);
/// Accumulates gradients for affine_rows. `dx` may be null.
void affine_rows_backward(const Linear& layer, const Tensor& x, const Tensor& dy, Tensor* dx, Linear& grads);

// ---------------------------------------------------------------------------
// Tensor-level operations
// ---------------------------------------------------------------------------

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dy);

Tensor glu(const Tensor& o);
Tensor glu_backward(const Tensor& o, const Tensor& dy);

Tensor softmax(const Tensor& v);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

/// −log softmax(logits)[target].
double cross_entropy(const Tensor& logits, std::size_t target);
double cross_entropy(std::span<const double> logits, std::size_t target);
/// softmax(logits) − onehot(target).
Tensor cross_entropy_backward(const Tensor& logits, std::size_t target);
void cross_entropy_backward(std::span<const double> logits, std::size_t target, std::span<double> dlogits);

}  // namespace tdconved
