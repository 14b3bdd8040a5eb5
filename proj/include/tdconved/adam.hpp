#pragma once

#include <cstdint>

#include "tdconved/tensor.hpp"

namespace tdconved {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter tensor. `m` and `v` are allocated on
/// the first step with the parameter's shape.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update applied to `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config);
void adam_step(Tensor& param, std::span<const double> grad, AdamState& state, const AdamConfig& config);

}  // namespace tdconved
