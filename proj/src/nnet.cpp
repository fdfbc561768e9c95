#include "dprl/nnet.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace dprl::nnet {
namespace {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;
using Bias = Eigen::Map<Eigen::VectorXd>;

void validate_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw DimensionError("network needs at least one layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].input_dim == 0 || layers[k].output_dim == 0) {
      throw DimensionError("layer " + std::to_string(k) +
                           " has a zero dimension");
    }
    if (k > 0 && layers[k].input_dim != layers[k - 1].output_dim) {
      std::ostringstream os;
      os << "layer " << k << " expects " << layers[k].input_dim
         << " inputs but layer " << k - 1 << " produces "
         << layers[k - 1].output_dim;
      throw DimensionError(os.str());
    }
  }
}

void activate(Matrix& z, Activation act) {
  switch (act) {
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Identity:
      break;
  }
}

// Turns dL/d(output) into dL/d(pre-activation) in place.
void activation_grad(Matrix& grad, const Matrix& out, Activation act) {
  switch (act) {
    case Activation::ReLU:
      grad = (out.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::Tanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::Identity:
      break;
  }
}

}  // namespace

std::size_t param_count(std::span<const LayerSpec> layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.input_dim * l.output_dim + l.output_dim;
  return n;
}

std::vector<LayerSpec> make_layers(std::size_t input_dim,
                                   std::size_t hidden_width,
                                   std::size_t hidden_layers,
                                   std::size_t output_dim, Activation output) {
  std::vector<LayerSpec> layers;
  std::size_t in = input_dim;
  for (std::size_t k = 0; k < hidden_layers; ++k) {
    layers.push_back({in, hidden_width, Activation::ReLU});
    in = hidden_width;
  }
  layers.push_back({in, output_dim, output});
  return layers;
}

Mlp::Mlp(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  validate_layers(layers_);
  params_.assign(param_count(layers_), 0.0);
}

Mlp::Mlp(std::vector<LayerSpec> layers, ParamVector params)
    : layers_(std::move(layers)) {
  validate_layers(layers_);
  set_params(std::move(params));
}

Mlp Mlp::random(std::vector<LayerSpec> layers, Rng& rng) {
  Mlp net(std::move(layers));
  std::size_t offset = 0;
  for (const auto& l : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.input_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = l.input_dim * l.output_dim + l.output_dim;
    for (std::size_t i = 0; i < n; ++i) net.params_[offset + i] = dist(rng);
    offset += n;
  }
  return net;
}

void Mlp::set_params(ParamVector params) {
  const std::size_t expected = param_count(layers_);
  if (params.size() != expected) {
    throw DimensionError("parameter vector has " +
                         std::to_string(params.size()) + " entries, expected " +
                         std::to_string(expected));
  }
  params_ = std::move(params);
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
  Matrix x = Eigen::Map<const Eigen::VectorXd>(input.data(),
                                               static_cast<Eigen::Index>(input.size()));
  Matrix y = forward(x);
  return {y.data(), y.data() + y.size()};
}

Matrix Mlp::forward(const Matrix& inputs) const {
  Trace unused;
  return forward(inputs, unused);
}

Matrix Mlp::forward(const Matrix& inputs, Trace& trace) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    throw DimensionError("forward: input has " + std::to_string(inputs.rows()) +
                         " rows, network expects " +
                         std::to_string(input_dim()));
  }
  trace.outputs.clear();
  trace.outputs.reserve(layers_.size() + 1);
  trace.outputs.push_back(inputs);
  std::size_t offset = 0;
  for (const auto& l : layers_) {
    const auto rows = static_cast<Eigen::Index>(l.output_dim);
    const auto cols = static_cast<Eigen::Index>(l.input_dim);
    ConstWeights w(params_.data() + offset, rows, cols);
    ConstBias b(params_.data() + offset + l.input_dim * l.output_dim, rows);
    Matrix z = w * trace.outputs.back();
    z.colwise() += b;
    if (&l == &layers_.back()) trace.final_pre_activation = z;
    activate(z, l.activation);
    trace.outputs.push_back(std::move(z));
    offset += l.input_dim * l.output_dim + l.output_dim;
  }
  return trace.outputs.back();
}

Mlp::Gradients Mlp::backward(const Trace& trace, const Matrix& upstream,
                             const Matrix* pre_activation_grad) const {
  if (trace.outputs.size() != layers_.size() + 1) {
    throw DimensionError("backward: trace does not belong to this network");
  }
  const Matrix& out = trace.outputs.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw DimensionError("backward: upstream gradient is " +
                         std::to_string(upstream.rows()) + "x" +
                         std::to_string(upstream.cols()) + ", output is " +
                         std::to_string(out.rows()) + "x" +
                         std::to_string(out.cols()));
  }

  Gradients g;
  g.params.assign(params_.size(), 0.0);
  Matrix delta = upstream;
  std::size_t end = params_.size();
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const auto rows = static_cast<Eigen::Index>(l.output_dim);
    const auto cols = static_cast<Eigen::Index>(l.input_dim);
    const std::size_t n_w = l.input_dim * l.output_dim;
    const std::size_t offset = end - n_w - l.output_dim;

    activation_grad(delta, trace.outputs[k + 1], l.activation);
    if (pre_activation_grad != nullptr && k + 1 == layers_.size()) {
      if (pre_activation_grad->rows() != delta.rows() ||
          pre_activation_grad->cols() != delta.cols()) {
        throw DimensionError("backward: pre-activation gradient has the wrong shape");
      }
      delta += *pre_activation_grad;
    }
    Weights dw(g.params.data() + offset, rows, cols);
    Bias db(g.params.data() + offset + n_w, rows);
    dw.noalias() = delta * trace.outputs[k].transpose();
    db = delta.rowwise().sum();

    ConstWeights w(params_.data() + offset, rows, cols);
    delta = w.transpose() * delta;
    end = offset;
  }
  g.inputs = std::move(delta);
  return g;
}

Mlp::SampleGradients Mlp::backward(std::span<const double> input,
                                   std::span<const double> upstream) const {
  if (upstream.size() != output_dim()) {
    throw DimensionError("backward: upstream gradient has " +
                         std::to_string(upstream.size()) +
                         " entries, network output has " +
                         std::to_string(output_dim()));
  }
  Matrix x = Eigen::Map<const Eigen::VectorXd>(input.data(),
                                               static_cast<Eigen::Index>(input.size()));
  Trace trace;
  forward(x, trace);
  Matrix up = Eigen::Map<const Eigen::VectorXd>(
      upstream.data(), static_cast<Eigen::Index>(upstream.size()));
  Gradients g = backward(trace, up);
  return {std::move(g.params),
          std::vector<double>(g.inputs.data(), g.inputs.data() + g.inputs.size())};
}

ParamVector clone_params(const ParamVector& params) { return params; }

void soft_update(ParamVector& target, const ParamVector& online, double tau) {
  if (target.size() != online.size()) {
    throw DimensionError("soft_update: target has " +
                         std::to_string(target.size()) + " entries, online has " +
                         std::to_string(online.size()));
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  }
  // Endpoints are exact so tau = 0 / tau = 1 never perturb bits.
  if (tau == 0.0) return;
  if (tau == 1.0) {
    target = online;
    return;
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = tau * online[i] + (1.0 - tau) * target[i];
  }
}

}  // namespace dprl::nnet
