#include "dprl/ddpg.hpp"

#include "dprl/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dprl::ddpg {
namespace {

using Eigen::Index;

void check_responsibility(double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw std::invalid_argument("responsibility must lie in [0, 1], got " +
                                std::to_string(w));
  }
}

}  // namespace

Batch make_batch(std::span<const Transition> transitions) {
  if (transitions.empty()) throw std::invalid_argument("batch must be non-empty");
  const auto n = static_cast<Index>(transitions.size());
  const auto sd = static_cast<Index>(transitions.front().state.size());
  const auto ad = static_cast<Index>(transitions.front().action.size());
  Batch b;
  b.states.resize(sd, n);
  b.actions.resize(ad, n);
  b.next_states.resize(sd, n);
  b.rewards.resize(n);
  b.terminal.resize(n);
  for (Index j = 0; j < n; ++j) {
    const auto& t = transitions[static_cast<std::size_t>(j)];
    if (static_cast<Index>(t.state.size()) != sd ||
        static_cast<Index>(t.next_state.size()) != sd ||
        static_cast<Index>(t.action.size()) != ad) {
      throw nnet::DimensionError("transition " + std::to_string(j) +
                                 " has dimensions inconsistent with the batch");
    }
    for (Index i = 0; i < sd; ++i) {
      b.states(i, j) = t.state[static_cast<std::size_t>(i)];
      b.next_states(i, j) = t.next_state[static_cast<std::size_t>(i)];
    }
    for (Index i = 0; i < ad; ++i) b.actions(i, j) = t.action[static_cast<std::size_t>(i)];
    b.rewards(j) = t.reward;
    b.terminal(j) = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

Agent::Agent(AgentConfig config, AgentParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  if (config_.action_low.size() != config_.action_dim ||
      config_.action_high.size() != config_.action_dim) {
    throw nnet::DimensionError("action bounds do not match action_dim");
  }
  action_center_.resize(static_cast<Index>(config_.action_dim));
  action_half_.resize(static_cast<Index>(config_.action_dim));
  for (std::size_t i = 0; i < config_.action_dim; ++i) {
    if (!(config_.action_low[i] < config_.action_high[i])) {
      throw std::invalid_argument("action_low must be below action_high");
    }
    action_center_(static_cast<Index>(i)) = 0.5 * (config_.action_high[i] + config_.action_low[i]);
    action_half_(static_cast<Index>(i)) = 0.5 * (config_.action_high[i] - config_.action_low[i]);
  }
  if (params_.actor.input_dim() != config_.state_dim ||
      params_.actor.output_dim() != config_.action_dim ||
      params_.critic.input_dim() != config_.state_dim + config_.action_dim ||
      params_.critic.output_dim() != 1) {
    throw nnet::DimensionError("actor/critic shapes do not match the agent config");
  }
  if (params_.actor.layers().size() != config_.hidden_layers + 1 ||
      (config_.hidden_layers > 0 &&
       params_.actor.layers().front().output_dim != config_.hidden_width) ||
      params_.critic.layers().size() != config_.hidden_layers + 1 ||
      (config_.hidden_layers > 0 &&
       params_.critic.layers().front().output_dim != config_.hidden_width)) {
    throw nnet::DimensionError("network hidden layers do not match hidden_width x hidden_layers");
  }
  auto activations_ok = [](const Mlp& net, nnet::Activation output) {
    const auto& layers = net.layers();
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
      if (layers[k].activation != nnet::Activation::ReLU) return false;
    }
    return layers.back().activation == output;
  };
  if (!activations_ok(params_.actor, nnet::Activation::Tanh) ||
      !activations_ok(params_.critic, nnet::Activation::Identity)) {
    throw nnet::DimensionError(
        "network activations must be ReLU hidden layers with a tanh actor and linear critic");
  }
  if (params_.actor_target.layers() != params_.actor.layers() ||
      params_.critic_target.layers() != params_.critic.layers()) {
    throw nnet::DimensionError("target network shapes differ from online networks");
  }
}

Agent Agent::create(const AgentConfig& config, Rng& rng) {
  AgentParams p;
  p.actor = Mlp::random(nnet::make_layers(config.state_dim, config.hidden_width,
                                          config.hidden_layers, config.action_dim,
                                          nnet::Activation::Tanh),
                        rng);
  p.critic = Mlp::random(nnet::make_layers(config.state_dim + config.action_dim,
                                           config.hidden_width, config.hidden_layers, 1,
                                           nnet::Activation::Identity),
                         rng);
  p.actor_target = p.actor;
  p.critic_target = p.critic;
  Agent agent(config, std::move(p));
  agent.reset_optimizers();
  return agent;
}

void Agent::load_networks(const AgentParams& other) {
  params_.actor = other.actor;
  params_.critic = other.critic;
  params_.actor_target = other.actor_target;
  params_.critic_target = other.critic_target;
  reset_optimizers();
}

void Agent::reset_optimizers() {
  params_.actor_opt = nnet::make_optimizer(config_.optimizer, config_.actor_lr,
                                           params_.actor.params().size());
  params_.critic_opt = nnet::make_optimizer(config_.optimizer, config_.critic_lr,
                                            params_.critic.params().size());
}

std::vector<double> Agent::policy(std::span<const double> state) const {
  if (state.size() != config_.state_dim) {
    throw nnet::DimensionError("policy: state has " + std::to_string(state.size()) +
                               " entries, expected " + std::to_string(config_.state_dim));
  }
  auto out = params_.actor.forward(state);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = action_center_(static_cast<Index>(i)) + action_half_(static_cast<Index>(i)) * out[i];
  }
  return out;
}

std::vector<double> Agent::select_action(std::span<const double> state,
                                         const NoiseSpec& noise, Rng& rng) const {
  if (!(noise.stddev >= 0.0)) throw std::invalid_argument("noise stddev must be >= 0");
  for (double x : state) {
    if (!std::isfinite(x)) throw nnet::NonFiniteError("select_action: state is not finite");
  }
  auto a = policy(state);
  if (noise.stddev > 0.0) {
    std::normal_distribution<double> eps(0.0, noise.stddev);
    for (double& x : a) x += eps(rng);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::clamp(a[i], config_.action_low[i], config_.action_high[i]);
  }
  return a;
}

Matrix Agent::normalize_actions(const Matrix& actions) const {
  return ((actions.colwise() - action_center_).array().colwise() / action_half_.array())
      .matrix();
}

Matrix Agent::critic_input(const Matrix& states, const Matrix& normalized_actions) const {
  Matrix x(states.rows() + normalized_actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(normalized_actions.rows()) = normalized_actions;
  return x;
}

Eigen::VectorXd Agent::bellman_targets(const Batch& batch, TargetSource source) const {
  if (batch.size() == 0) throw std::invalid_argument("bellman_targets: empty batch");
  const Mlp& actor = source == TargetSource::TargetNetworks ? params_.actor_target
                                                            : params_.actor;
  const Mlp& critic = source == TargetSource::TargetNetworks ? params_.critic_target
                                                             : params_.critic;
  const Matrix next_actions = actor.forward(batch.next_states);
  const Matrix next_q = critic.forward(critic_input(batch.next_states, next_actions));
  Eigen::VectorXd y = batch.rewards;
  for (Index j = 0; j < y.size(); ++j) {
    if (batch.terminal(j) == 0.0) y(j) += config_.gamma * next_q(0, j);
  }
  return y;
}

Eigen::VectorXd Agent::q_values(const Batch& batch) const {
  const Matrix q = params_.critic.forward(
      critic_input(batch.states, normalize_actions(batch.actions)));
  return q.row(0).transpose();
}

double Agent::critic_update(const Batch& batch, double responsibility) {
  check_responsibility(responsibility);
  const Eigen::VectorXd y = bellman_targets(batch, TargetSource::TargetNetworks);
  Mlp::Trace trace;
  const Matrix q = params_.critic.forward(
      critic_input(batch.states, normalize_actions(batch.actions)), trace);
  const Eigen::RowVectorXd residual = q.row(0) - y.transpose();
  const double n = static_cast<double>(batch.size());
  const double mse = residual.squaredNorm() / n;
  if (!std::isfinite(mse)) throw nnet::NonFiniteError("critic loss is not finite");
  if (responsibility == 0.0) return mse;
  const Matrix upstream = (2.0 / n) * residual;
  const auto grad = params_.critic.backward(trace, upstream);
  nnet::optimizer_step(params_.critic_opt, params_.critic.params(), grad.params,
                       responsibility);
  return mse;
}

void Agent::actor_update(const Batch& batch, double responsibility) {
  check_responsibility(responsibility);
  Mlp::Trace actor_trace;
  const Matrix actions = params_.actor.forward(batch.states, actor_trace);
  Mlp::Trace critic_trace;
  const Matrix q = params_.critic.forward(critic_input(batch.states, actions), critic_trace);
  const double n = static_cast<double>(batch.size());
  if (!q.allFinite()) throw nnet::NonFiniteError("actor objective is not finite");
  if (responsibility == 0.0) return;
  // Loss is -mean Q; only the action rows of the critic input gradient are used.
  const Matrix upstream = Matrix::Constant(1, q.cols(), -1.0 / n);
  const auto critic_grad = params_.critic.backward(critic_trace, upstream);
  const Matrix action_grad =
      critic_grad.inputs.bottomRows(static_cast<Index>(config_.action_dim));
  const double lambda = config_.preactivation_penalty;
  const auto grad = [&] {
    if (lambda == 0.0) return params_.actor.backward(actor_trace, action_grad);
    const Matrix pre_grad = (2.0 * lambda / n) * actor_trace.final_pre_activation;
    return params_.actor.backward(actor_trace, action_grad, &pre_grad);
  }();
  nnet::optimizer_step(params_.actor_opt, params_.actor.params(), grad.params,
                       responsibility);
}

void Agent::soft_update_targets() {
  nnet::soft_update(params_.actor_target.params(), params_.actor.params(), config_.tau);
  nnet::soft_update(params_.critic_target.params(), params_.critic.params(), config_.tau);
}

double Agent::train_step(const Batch& batch, double responsibility) {
  const double mse = critic_update(batch, responsibility);
  if (responsibility == 0.0) return mse;
  actor_update(batch, responsibility);
  soft_update_targets();
  return mse;
}

void save_networks(const AgentParams& params, const std::filesystem::path& dir,
                   const std::string& prefix) {
  std::filesystem::create_directories(dir);
  nnet::save_checkpoint(params.actor, dir / (prefix + "_actor.bin"));
  nnet::save_checkpoint(params.critic, dir / (prefix + "_critic.bin"));
  nnet::save_checkpoint(params.actor_target, dir / (prefix + "_actor_target.bin"));
  nnet::save_checkpoint(params.critic_target, dir / (prefix + "_critic_target.bin"));
}

AgentParams load_networks(const std::filesystem::path& dir, const std::string& prefix) {
  AgentParams p;
  p.actor = nnet::load_checkpoint(dir / (prefix + "_actor.bin"));
  p.critic = nnet::load_checkpoint(dir / (prefix + "_critic.bin"));
  p.actor_target = nnet::load_checkpoint(dir / (prefix + "_actor_target.bin"));
  p.critic_target = nnet::load_checkpoint(dir / (prefix + "_critic_target.bin"));
  return p;
}

}  // namespace dprl::ddpg
