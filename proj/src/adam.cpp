#include "tdconved/adam.hpp"

#include <cmath>

#include "tdconved/errors.hpp"

namespace tdconved {

void adam_step(Tensor& param, std::span<const double> grad, AdamState& state, const AdamConfig& config) {
  if (grad.size() != param.numel()) {
    throw ShapeError("adam_step: gradient of " + std::to_string(grad.size()) + " values for parameter " +
                     shape_to_string(param.shape()));
  }
  if (state.m.empty()) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  } else if (state.m.shape() != param.shape()) {
    throw ShapeError("adam_step: state " + shape_to_string(state.m.shape()) + " vs parameter " +
                     shape_to_string(param.shape()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto p = param.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grad[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config) {
  require_shape(grad, param.shape(), "adam_step");
  adam_step(param, grad.values(), state, config);
}

}  // namespace tdconved
