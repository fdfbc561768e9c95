#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dprl/nnet.hpp"
#include "dprl/optimizer.hpp"
#include "dprl/replay.hpp"
#include "dprl/rng.hpp"

namespace dprl::ddpg {

using nnet::Matrix;
using nnet::Mlp;
using nnet::OptimizerState;

struct AgentConfig {
  std::size_t state_dim = 2;
  std::size_t action_dim = 2;
  std::vector<double> action_low{-0.1, -0.1};
  std::vector<double> action_high{0.1, 0.1};
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;
  nnet::OptimizerKind optimizer = nnet::OptimizerKind::Adam;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double tau = 0.005;
  // Weight of mean(z^2) over the actor's pre-tanh outputs z, added to the
  // actor loss. Keeps the policy out of tanh saturation at arena walls.
  double preactivation_penalty = 1e-2;
};

struct NoiseSpec {
  double stddev = 0.0;  // in environment action units
};

struct AgentParams {
  Mlp actor;
  Mlp critic;
  Mlp actor_target;
  Mlp critic_target;
  OptimizerState actor_opt;
  OptimizerState critic_opt;
};

// Column-per-sample view of a transition batch. Actions are in environment
// units; the agent rescales them to [-1, 1] before they reach the critic.
struct Batch {
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Eigen::VectorXd rewards;
  Eigen::VectorXd terminal;  // 1.0 at absorbing transitions

  std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
};

Batch make_batch(std::span<const Transition> transitions);

enum class TargetSource { TargetNetworks, OnlineNetworks };

class Agent {
 public:
  Agent() = default;
  Agent(AgentConfig config, AgentParams params);

  // Fresh networks drawn from `rng`; targets start as exact copies.
  static Agent create(const AgentConfig& config, Rng& rng);

  const AgentConfig& config() const { return config_; }
  const AgentParams& params() const { return params_; }
  AgentParams& params() { return params_; }

  // Replaces networks with those of `other` and resets optimizer moments.
  void load_networks(const AgentParams& other);
  void reset_optimizers();

  std::vector<double> policy(std::span<const double> state) const;

  // clip(mu(s) + eps) with eps ~ N(0, stddev^2) per dimension. Draws exactly
  // action_dim normals from `rng` when stddev > 0 and none otherwise.
  std::vector<double> select_action(std::span<const double> state,
                                    const NoiseSpec& noise, Rng& rng) const;

  // y_i = r_i + gamma * Q(s'_i, mu(s'_i)), with the bootstrap dropped at
  // terminal transitions.
  Eigen::VectorXd bellman_targets(const Batch& batch,
                                  TargetSource source = TargetSource::TargetNetworks) const;

  // Q(s_i, a_i) under the online critic.
  Eigen::VectorXd q_values(const Batch& batch) const;

  // One step on the mean squared Bellman residual with the learning rate
  // scaled by `responsibility`; returns the pre-update MSE.
  double critic_update(const Batch& batch, double responsibility);

  // One ascent step on mean Q(s, mu(s)) with the critic frozen.
  void actor_update(const Batch& batch, double responsibility);

  void soft_update_targets();

  // critic_update + actor_update + soft_update_targets. A zero
  // responsibility is a no-op (the MSE is still computed and returned).
  double train_step(const Batch& batch, double responsibility = 1.0);

  Matrix normalize_actions(const Matrix& actions) const;

 private:
  Matrix critic_input(const Matrix& states, const Matrix& normalized_actions) const;

  AgentConfig config_;
  AgentParams params_;
  Eigen::VectorXd action_center_;
  Eigen::VectorXd action_half_;
};

// Writes <dir>/<prefix>_{actor,critic,actor_target,critic_target}.bin.
void save_networks(const AgentParams& params, const std::filesystem::path& dir,
                   const std::string& prefix);
// Networks only; optimizer states are left default-constructed.
AgentParams load_networks(const std::filesystem::path& dir, const std::string& prefix);

}  // namespace dprl::ddpg
