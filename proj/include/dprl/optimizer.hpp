#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "dprl/nnet.hpp"

namespace dprl::nnet {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParamVector m;
  ParamVector v;
  std::uint64_t step_count = 0;
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate,
                              std::size_t param_count);

// One descent step on `gradient`. `scale` multiplies the learning rate, so a
// step with scale w under SGD is the step (lr * w) * g. Under Adam the moments
// track the raw gradient and the bias-corrected update is multiplied by
// lr * w; scale == 0 leaves params and moments untouched.
//
// Throws NonFiniteError (before touching anything) if the gradient has a
// non-finite entry.
void optimizer_step(OptimizerState& state, ParamVector& params,
                    std::span<const double> gradient, double scale = 1.0);

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

}  // namespace dprl::nnet
