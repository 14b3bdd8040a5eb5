#pragma once

#include <functional>
#include <span>

#include "tdconved/tensor.hpp"

namespace tdconved {

/// Central-difference gradient of a scalar function:
/// (f(x + eps·e_i) − f(x − eps·e_i)) / (2·eps) for every coordinate i.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// Elementwise relative error floor: differences are measured against
/// max(|analytic|, |numeric|, kRelErrorFloor) so coordinates whose true
/// gradient is zero are judged on an absolute scale.
inline constexpr double kRelErrorFloor = 1e-6;

/// Largest elementwise |a − n| / max(|a|, |n|, kRelErrorFloor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace tdconved
