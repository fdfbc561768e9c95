#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dprl/ddpg.hpp"

namespace dprl::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("dprl_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline ddpg::AgentConfig small_agent_config(nnet::OptimizerKind opt = nnet::OptimizerKind::Sgd) {
  ddpg::AgentConfig c;
  c.hidden_width = 16;
  c.hidden_layers = 2;
  c.optimizer = opt;
  c.actor_lr = 1e-2;
  c.critic_lr = 1e-2;
  return c;
}

// Navigation-shaped transitions with uniform states and actions.
inline std::vector<ddpg::Transition> random_transitions(std::size_t n, Rng& rng,
                                                        double terminal_rate = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> act(-0.1, 0.1);
  std::vector<ddpg::Transition> out;
  for (std::size_t i = 0; i < n; ++i) {
    ddpg::Transition t;
    t.state = {unit(rng), unit(rng)};
    t.action = {act(rng), act(rng)};
    t.next_state = {unit(rng), unit(rng)};
    t.reward = -unit(rng);
    t.terminal = unit(rng) < terminal_rate;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace dprl::test
