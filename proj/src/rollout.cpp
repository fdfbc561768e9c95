#include "dprl/rollout.hpp"

namespace dprl::ddpg {

AgentConfig agent_config_for(const envs::EnvSpec& spec, AgentConfig base) {
  base.state_dim = spec.state_dim;
  base.action_dim = spec.action_dim;
  base.action_low = spec.action_low;
  base.action_high = spec.action_high;
  return base;
}

NoiseSpec default_noise(const envs::EnvSpec& spec, double fraction) {
  return {fraction * 0.5 * (spec.action_high[0] - spec.action_low[0])};
}

EpisodeStats run_episode(
    envs::Environment& env,
    const std::function<std::vector<double>(std::span<const double>)>& act,
    const std::function<void(const Transition&)>& after_step) {
  EpisodeStats stats;
  env.reset();
  while (true) {
    Transition t;
    t.state = env.state();
    t.action = act(t.state);
    auto r = env.step(t.action);
    t.reward = r.reward;
    t.next_state = std::move(r.next_state);
    t.terminal = r.terminal;
    stats.ret += t.reward;
    ++stats.steps;
    if (after_step) after_step(t);
    if (r.terminal || r.truncated) {
      stats.reached = r.terminal;
      break;
    }
  }
  stats.final_distance = envs::goal_distance(env.state(), env.task(), env.geometry());
  return stats;
}

EpisodeStats DdpgTrainer::episode(envs::Environment& env) {
  return run_episode(
      env,
      [&](std::span<const double> s) { return agent->select_action(s, noise, *exploration); },
      [&](const Transition& t) {
        buffer->push(t);
        if (buffer->size() >= batch_size) {
          const auto batch = buffer->sample(batch_size, *replay);
          agent->train_step(make_batch(batch), 1.0);
        }
      });
}

}  // namespace dprl::ddpg
