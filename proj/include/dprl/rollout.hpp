#pragma once

#include <functional>

#include "dprl/ddpg.hpp"
#include "dprl/envs.hpp"

namespace dprl::ddpg {

struct EpisodeStats {
  double ret = 0.0;
  int steps = 0;
  bool reached = false;          // ended on a terminal (success) transition
  double final_distance = 0.0;   // goal_distance() of the last state
};

AgentConfig agent_config_for(const envs::EnvSpec& spec, AgentConfig base = {});

// Default exploration: 0.1 x the half-range of the first action dimension.
NoiseSpec default_noise(const envs::EnvSpec& spec, double fraction = 0.1);

// Runs one episode from reset() to terminal or horizon. `act` picks the
// action; `after_step` sees every transition right after the environment
// step (push to a buffer, train, ...).
EpisodeStats run_episode(
    envs::Environment& env,
    const std::function<std::vector<double>(std::span<const double>)>& act,
    const std::function<void(const Transition&)>& after_step);

// Plain DDPG step cadence: push, then one update once the buffer holds at
// least `batch_size` transitions.
struct DdpgTrainer {
  Agent* agent;
  ReplayBuffer* buffer;
  std::size_t batch_size;
  NoiseSpec noise;
  Rng* exploration;
  Rng* replay;

  EpisodeStats episode(envs::Environment& env);
};

}  // namespace dprl::ddpg
