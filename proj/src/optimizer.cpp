#include "dprl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace dprl::nnet {

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate,
                              std::size_t param_count) {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = learning_rate;
  if (kind == OptimizerKind::Adam) {
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
  }
  return s;
}

void optimizer_step(OptimizerState& state, ParamVector& params,
                    std::span<const double> gradient, double scale) {
  if (gradient.size() != params.size()) {
    throw DimensionError("optimizer_step: gradient has " +
                         std::to_string(gradient.size()) +
                         " entries, params have " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    if (!std::isfinite(gradient[i])) {
      throw NonFiniteError("optimizer_step: gradient entry " +
                           std::to_string(i) + " is not finite");
    }
  }
  if (!std::isfinite(scale)) {
    throw NonFiniteError("optimizer_step: scale is not finite");
  }
  if (scale == 0.0) return;

  const double lr = state.learning_rate * scale;
  if (state.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * gradient[i];
    return;
  }

  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("optimizer_step: Adam moments do not match params");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

}  // namespace dprl::nnet
