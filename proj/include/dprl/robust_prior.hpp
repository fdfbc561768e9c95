#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dprl/ddpg.hpp"
#include "dprl/envs.hpp"
#include "dprl/rollout.hpp"

namespace dprl::robust_prior {

struct RandomizationSpec {
  envs::Domain domain = envs::Domain::Navigation2D;
  int m = 8;
  int episodes_per_task = 50;
  std::uint64_t seed = 0;
};

struct PretrainConfig {
  RandomizationSpec spec;
  ddpg::AgentConfig agent;  // state/action fields are filled from the domain
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 50000;
  double noise_fraction = 0.1;
};

struct PretrainResult {
  ddpg::AgentParams params;
  std::vector<envs::TaskParams> tasks;
  std::vector<double> critic_losses;  // one per update, in order
  std::vector<ddpg::EpisodeStats> episodes;
};

// Thrown when a loss or parameter goes non-finite during pretraining.
class DivergenceError : public nnet::NonFiniteError {
 public:
  DivergenceError(const std::string& what, std::uint64_t seed, std::uint64_t step)
      : nnet::NonFiniteError(what + " (seed " + std::to_string(seed) + ", step " +
                             std::to_string(step) + ")"),
        seed_(seed),
        step_(step) {}
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t seed_;
  std::uint64_t step_;
};

// Goals drawn uniformly from the domain with a stream disjoint from every
// lifelong task sequence generated from the same seed.
std::vector<envs::TaskParams> pretraining_tasks(const RandomizationSpec& spec);

// One DDPG agent, one shared replay buffer, m * episodes_per_task episodes;
// each episode's task is drawn uniformly from the pretraining tasks.
PretrainResult train_robust_prior(const PretrainConfig& config);

// <dir>/prior_{actor,critic,actor_target,critic_target}.bin
void save_prior(const ddpg::AgentParams& params, const std::filesystem::path& dir);
ddpg::AgentParams load_prior(const std::filesystem::path& dir);

}  // namespace dprl::robust_prior
