#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dprl/rng.hpp"

namespace dprl::nnet {

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1, Tanh = 2 };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::Identity;

  bool operator==(const LayerSpec&) const = default;
};

// Flat weights-then-biases per layer; weights are row-major (output x input).
// The aligned allocator fixes the alignment of every layer block, which keeps
// Eigen's vectorized kernels (and so every result bit) independent of where
// the heap put the buffer.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Batched values are laid out one sample per column.
using Matrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t param_count(std::span<const LayerSpec> layers);

// Hidden layers of `width` with ReLU, then a final layer with `output`.
std::vector<LayerSpec> make_layers(std::size_t input_dim,
                                   std::size_t hidden_width,
                                   std::size_t hidden_layers,
                                   std::size_t output_dim,
                                   Activation output);

// Dense feed-forward network. Parameters are a plain value; copying an Mlp
// copies its weights.
class Mlp {
 public:
  // Activations of every layer for one batch, kept for backward().
  // outputs[0] is the input, outputs[k + 1] the post-activation of layer k.
  struct Trace {
    std::vector<Matrix> outputs;
    Matrix final_pre_activation;
  };

  struct Gradients {
    ParamVector params;
    Matrix inputs;
  };

  struct SampleGradients {
    ParamVector params;
    std::vector<double> input;
  };

  Mlp() = default;
  explicit Mlp(std::vector<LayerSpec> layers);  // all-zero parameters
  Mlp(std::vector<LayerSpec> layers, ParamVector params);

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static Mlp random(std::vector<LayerSpec> layers, Rng& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.front().input_dim; }
  std::size_t output_dim() const { return layers_.back().output_dim; }

  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }
  void set_params(ParamVector params);

  std::vector<double> forward(std::span<const double> input) const;
  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Trace& trace) const;

  // Gradient of sum_j upstream(:, j) . output(:, j) with respect to the
  // parameters and to the inputs. `pre_activation_grad`, when given, is an
  // extra gradient on the final layer's pre-activation (a penalty that must
  // not vanish when the output activation saturates).
  Gradients backward(const Trace& trace, const Matrix& upstream,
                     const Matrix* pre_activation_grad = nullptr) const;
  SampleGradients backward(std::span<const double> input,
                           std::span<const double> upstream) const;

 private:
  std::vector<LayerSpec> layers_;
  ParamVector params_;
};

ParamVector clone_params(const ParamVector& params);

// target <- tau * online + (1 - tau) * target
void soft_update(ParamVector& target, const ParamVector& online, double tau);

}  // namespace dprl::nnet
