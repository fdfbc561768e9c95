#include "dprl/robust_prior.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dprl::robust_prior {

std::vector<envs::TaskParams> pretraining_tasks(const RandomizationSpec& spec) {
  if (spec.m < 1) throw std::invalid_argument("pretraining needs m >= 1 tasks");
  Rng rng = make_rng(spec.seed, Stream::PretrainTasks);
  std::vector<envs::TaskParams> tasks;
  for (int i = 0; i < spec.m; ++i) tasks.push_back(envs::sample_goal(spec.domain, rng));
  return tasks;
}

PretrainResult train_robust_prior(const PretrainConfig& config) {
  const auto& spec = config.spec;
  if (spec.episodes_per_task < 1) throw std::invalid_argument("episodes_per_task must be >= 1");
  if (config.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");

  PretrainResult out;
  out.tasks = pretraining_tasks(spec);
  const auto env_spec = envs::env_spec(spec.domain);
  const auto agent_cfg = ddpg::agent_config_for(env_spec, config.agent);

  Rng init = make_rng(spec.seed, Stream::ComponentInit);
  Rng exploration = make_rng(spec.seed, Stream::Exploration);
  Rng replay = make_rng(spec.seed, Stream::ReplaySampling);
  Rng picker = make_rng(spec.seed, Stream::PretrainTasks, 1);

  auto agent = ddpg::Agent::create(agent_cfg, init);
  ddpg::ReplayBuffer buffer(config.buffer_capacity);
  const auto noise = ddpg::default_noise(env_spec, config.noise_fraction);
  std::uniform_int_distribution<std::size_t> pick(0, out.tasks.size() - 1);

  std::uint64_t step = 0;
  const int total = spec.m * spec.episodes_per_task;
  for (int e = 0; e < total; ++e) {
    const auto& task = out.tasks.size() == 1 ? out.tasks.front() : out.tasks[pick(picker)];
    envs::Environment env(task);
    auto stats = ddpg::run_episode(
        env,
        [&](std::span<const double> s) { return agent.select_action(s, noise, exploration); },
        [&](const ddpg::Transition& t) {
          ++step;
          buffer.push(t);
          if (buffer.size() < config.batch_size) return;
          double loss = 0.0;
          try {
            loss = agent.train_step(ddpg::make_batch(buffer.sample(config.batch_size, replay)));
          } catch (const nnet::NonFiniteError& err) {
            throw DivergenceError(err.what(), spec.seed, step);
          }
          out.critic_losses.push_back(loss);
        });
    if (!std::isfinite(stats.ret)) {
      throw DivergenceError("episode return is not finite", spec.seed, step);
    }
    out.episodes.push_back(stats);
  }
  out.params = agent.params();
  return out;
}

void save_prior(const ddpg::AgentParams& params, const std::filesystem::path& dir) {
  ddpg::save_networks(params, dir, "prior");
}

ddpg::AgentParams load_prior(const std::filesystem::path& dir) {
  return ddpg::load_networks(dir, "prior");
}

}  // namespace dprl::robust_prior
