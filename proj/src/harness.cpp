#include "dprl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "dprl/robust_prior.hpp"
#include "dprl/rollout.hpp"

namespace dprl::harness {
namespace fs = std::filesystem;
using ddpg::Agent;
using ddpg::ReplayBuffer;
using ddpg::Transition;

std::string to_string(Method m) {
  switch (m) {
    case Method::FineTune: return "finetune";
    case Method::Reservoir: return "reservoir";
    case Method::FromScratch: return "fromscratch";
    case Method::Robust: return "robust";
    case Method::Dpmm: return "dpmm";
    case Method::DpmmRobust: return "dpmm+robust";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (key == "finetune") return Method::FineTune;
  if (key == "reservoir") return Method::Reservoir;
  if (key == "fromscratch" || key == "scratch") return Method::FromScratch;
  if (key == "robust") return Method::Robust;
  if (key == "dpmm") return Method::Dpmm;
  if (key == "dpmm+robust" || key == "dpmmrobust") return Method::DpmmRobust;
  throw ConfigError("unknown method '" + name + "'");
}

bool uses_prior(Method m) { return m == Method::Robust || m == Method::DpmmRobust; }
bool is_dpmm(Method m) { return m == Method::Dpmm || m == Method::DpmmRobust; }

void validate(const RunConfig& c, bool prior_in_memory) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.tasks < 1 && c.task_file.empty()) fail("tasks must be >= 1");
  if (c.episodes_per_task < 1) fail("episodes must be >= 1");
  if (!(c.gamma >= 0.0 && c.gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) fail("tau must lie in (0, 1]");
  if (!(c.learning_rate > 0.0)) fail("learning rate must be positive");
  if (!(c.noise >= 0.0)) fail("noise must be >= 0");
  if (!(c.xi > 0.0) || !std::isfinite(c.xi)) fail("xi must be positive and finite");
  if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) fail("sigma must be positive and finite");
  if (c.hidden_width < 1) fail("hidden width must be >= 1");
  if (c.batch_size < 1) fail("batch size must be >= 1");
  if (c.buffer_capacity < c.batch_size) fail("buffer capacity must be >= batch size");
  if (!(c.em_epsilon > 0.0)) fail("EM threshold must be positive");
  if (c.em_max_iters < 1) fail("EM needs at least one iteration");
  if (!(c.preactivation_penalty >= 0.0)) fail("pre-activation penalty must be >= 0");
  if (uses_prior(c.method) && c.prior_path.empty() && !prior_in_memory) {
    fail("method " + to_string(c.method) + " requires a prior (--prior DIR)");
  }
  try {
    envs::parse_structure(c.task_structure);
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"domain", envs::to_string(c.domain)},
          {"method", to_string(c.method)},
          {"tasks", c.tasks},
          {"episodes", c.episodes_per_task},
          {"seed", c.seed},
          {"xi", c.xi},
          {"sigma", c.sigma},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"noise", c.noise},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"prior", c.prior_path},
          {"structure", c.task_structure},
          {"task_file", c.task_file},
          {"out", c.output_dir},
          {"optimizer", nnet::to_string(c.optimizer)},
          {"preactivation_penalty", c.preactivation_penalty},
          {"em_epsilon", c.em_epsilon},
          {"em_max_iters", c.em_max_iters},
          {"spawn", c.spawn}};
}

RunConfig config_from_json(const nlohmann::json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "domain") c.domain = envs::domain_from_string(v.get<std::string>());
      else if (key == "method") c.method = method_from_string(v.get<std::string>());
      else if (key == "tasks") c.tasks = v.get<int>();
      else if (key == "episodes") c.episodes_per_task = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "xi") c.xi = v.get<double>();
      else if (key == "sigma") c.sigma = v.get<double>();
      else if (key == "hidden_width") c.hidden_width = v.get<std::size_t>();
      else if (key == "hidden_layers") c.hidden_layers = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "noise") c.noise = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "buffer_capacity") c.buffer_capacity = v.get<std::size_t>();
      else if (key == "prior") c.prior_path = v.get<std::string>();
      else if (key == "structure") c.task_structure = v.get<std::string>();
      else if (key == "task_file") c.task_file = v.get<std::string>();
      else if (key == "out") c.output_dir = v.get<std::string>();
      else if (key == "optimizer") c.optimizer = nnet::optimizer_kind_from_string(v.get<std::string>());
      else if (key == "preactivation_penalty") c.preactivation_penalty = v.get<double>();
      else if (key == "em_epsilon") c.em_epsilon = v.get<double>();
      else if (key == "em_max_iters") c.em_max_iters = v.get<int>();
      else if (key == "spawn") c.spawn = v.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

ddpg::AgentConfig agent_config(const RunConfig& c) {
  ddpg::AgentConfig base;
  base.hidden_width = c.hidden_width;
  base.hidden_layers = c.hidden_layers;
  base.optimizer = c.optimizer;
  base.actor_lr = c.learning_rate;
  base.critic_lr = c.learning_rate;
  base.gamma = c.gamma;
  base.tau = c.tau;
  base.preactivation_penalty = c.preactivation_penalty;
  return ddpg::agent_config_for(envs::env_spec(c.domain), base);
}

envs::TaskSequence make_tasks(const RunConfig& c) {
  if (c.task_file.empty()) {
    return envs::sample_task_sequence(c.domain, c.tasks, c.seed,
                                      envs::parse_structure(c.task_structure));
  }
  envs::TaskSequence seq;
  try {
    seq = envs::load_task_sequence(c.task_file);
  } catch (const std::exception& e) {
    throw ConfigError("cannot load task file " + c.task_file + ": " + e.what());
  }
  if (seq.domain != c.domain) {
    throw ConfigError("task file is for " + envs::to_string(seq.domain) + ", run is for " +
                      envs::to_string(c.domain));
  }
  return seq;
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

class OutputFiles {
 public:
  OutputFiles(const RunConfig& c, const envs::TaskSequence& seq) : enabled_(!c.output_dir.empty()) {
    if (!enabled_) return;
    dir_ = c.output_dir;
    fs::create_directories(dir_);
    envs::save_task_sequence(seq, dir_ / "tasks.json");
    {
      std::ofstream tasks(dir_ / "tasks.csv");
      tasks << "task";
      const std::size_t dims = seq.tasks.front().goal.size();
      for (std::size_t d = 1; d <= dims; ++d) tasks << ",goal_" << d;
      tasks << ",center\n";
      for (std::size_t t = 0; t < seq.tasks.size(); ++t) {
        tasks << t + 1;
        for (double g : seq.tasks[t].goal) tasks << ',' << fmt(g);
        tasks << ',' << (seq.center_of.empty() ? -1 : seq.center_of[t]) << '\n';
      }
    }
    write_run_json(c, "running", "");
    episodes_.open(dir_ / "episodes.csv", std::ios::trunc);
    episodes_ << "task,episode,return,steps,component,L,spawned\n" << std::flush;
    if (is_dpmm(c.method)) {
      clusters_.open(dir_ / "clusters.csv", std::ios::trunc);
      clusters_ << "task";
      for (std::size_t d = 1; d <= seq.tasks.front().goal.size(); ++d) clusters_ << ",goal_" << d;
      clusters_ << ",center,cluster,active,L,spawned\n" << std::flush;
    }
    if (!episodes_) throw std::runtime_error("cannot write to " + dir_.string());
  }

  void episode(const EpisodeRecord& r) {
    if (!enabled_) return;
    episodes_ << r.task << ',' << r.episode << ',' << fmt(r.ret) << ',' << r.steps << ','
              << r.component << ',' << r.L << ',' << (r.spawned ? 1 : 0) << '\n'
              << std::flush;
  }

  void cluster(const ClusterRecord& r) {
    if (!enabled_) return;
    clusters_ << r.task;
    for (double g : r.goal) clusters_ << ',' << fmt(g);
    clusters_ << ',' << r.center << ',' << r.cluster << ',' << r.active << ',' << r.L << ','
              << (r.spawned ? 1 : 0) << '\n'
              << std::flush;
  }

  void finish(const RunConfig& c, const RunResult& result) {
    if (!enabled_) return;
    episodes_.close();
    if (clusters_.is_open()) clusters_.close();
    if (result.mixture && !result.mixture->components.empty()) {
      dpmm::save_mixture(*result.mixture, dir_ / "mixture");
    }
    write_run_json(c, result.failed ? "failed" : "completed", result.error);
    if (!result.episodes.empty()) summarize(dir_);
  }

 private:
  void write_run_json(const RunConfig& c, const std::string& status, const std::string& error) {
    nlohmann::json j{{"config", to_json(c)}, {"status", status}};
    if (!error.empty()) j["error"] = error;
    std::ofstream out(dir_ / "run.json", std::ios::trunc);
    out << j.dump(2) << '\n';
  }

  bool enabled_;
  fs::path dir_;
  std::ofstream episodes_;
  std::ofstream clusters_;
};

struct Context {
  const RunConfig& config;
  const RunHooks& hooks;
  ddpg::AgentConfig agent_cfg;
  ddpg::NoiseSpec noise;
  Rng exploration;
  Rng replay;
  RunResult& result;
  OutputFiles& out;

  void emit(const EpisodeRecord& r, const Agent& acting) {
    result.episodes.push_back(r);
    out.episode(r);
    if (hooks.on_episode) hooks.on_episode(r, acting);
  }

  void log_task(int t, const std::string& extra) {
    if (hooks.log == nullptr) return;
    const auto J = static_cast<std::size_t>(config.episodes_per_task);
    double sum = 0.0;
    const std::size_t n = std::min(J, result.episodes.size());
    for (std::size_t i = result.episodes.size() - n; i < result.episodes.size(); ++i) {
      sum += result.episodes[i].ret;
    }
    *hooks.log << to_string(config.method) << " task " << t << '/' << result.tasks.tasks.size()
               << " mean return " << fmt(n ? sum / static_cast<double>(n) : 0.0) << extra
               << std::endl;
  }
};

// FineTune, FromScratch and Robust: one agent, plain DDPG cadence.
void run_single_model(Context& ctx, const ddpg::AgentParams* prior) {
  const auto& c = ctx.config;
  const Method m = c.method;
  Rng init = make_rng(c.seed, Stream::ComponentInit);
  Agent agent = Agent::create(ctx.agent_cfg, init);
  ReplayBuffer buffer(c.buffer_capacity);
  for (std::size_t t = 0; t < ctx.result.tasks.tasks.size(); ++t) {
    if (t > 0 && m == Method::FromScratch) {
      Rng fresh = make_rng(c.seed, Stream::ComponentInit, t);
      agent = Agent::create(ctx.agent_cfg, fresh);
    }
    if (m == Method::Robust) agent = Agent(ctx.agent_cfg, *prior), agent.reset_optimizers();
    if (m != Method::FineTune) buffer.clear();

    envs::Environment env(ctx.result.tasks.tasks[t]);
    ddpg::DdpgTrainer trainer{&agent, &buffer, c.batch_size, ctx.noise, &ctx.exploration,
                              &ctx.replay};
    for (int j = 0; j < c.episodes_per_task; ++j) {
      const auto stats = trainer.episode(env);
      ctx.emit({static_cast<int>(t) + 1, j + 1, stats.ret, stats.steps, 0, 0, false}, agent);
    }
    ctx.log_task(static_cast<int>(t) + 1, "");
  }
}

// Half of every batch from a recent-transition window, half from a reservoir
// sample of the whole stream.
void run_reservoir(Context& ctx) {
  const auto& c = ctx.config;
  Rng init = make_rng(c.seed, Stream::ComponentInit);
  Agent agent = Agent::create(ctx.agent_cfg, init);
  ReplayBuffer recent(std::max(c.batch_size, c.buffer_capacity / 10));
  ReplayBuffer reservoir(c.buffer_capacity, ddpg::ReplayMode::Reservoir,
                         derive_seed(c.seed, Stream::Reservoir));
  const std::size_t half = c.batch_size / 2;
  for (std::size_t t = 0; t < ctx.result.tasks.tasks.size(); ++t) {
    envs::Environment env(ctx.result.tasks.tasks[t]);
    for (int j = 0; j < c.episodes_per_task; ++j) {
      const auto stats = ddpg::run_episode(
          env,
          [&](std::span<const double> s) {
            return agent.select_action(s, ctx.noise, ctx.exploration);
          },
          [&](const Transition& tr) {
            recent.push(tr);
            reservoir.push(tr);
            if (recent.size() < c.batch_size) return;
            auto batch = recent.sample(half, ctx.replay);
            auto old = reservoir.sample(c.batch_size - half, ctx.replay);
            batch.insert(batch.end(), std::make_move_iterator(old.begin()),
                         std::make_move_iterator(old.end()));
            agent.train_step(ddpg::make_batch(batch));
          });
      ctx.emit({static_cast<int>(t) + 1, j + 1, stats.ret, stats.steps, 0, 0, false}, agent);
    }
    ctx.log_task(static_cast<int>(t) + 1, "");
  }
}

// One period per task. The period's first batch_size transitions, collected
// by the previous period's MAP component without any training, form the
// identification batch: it is scored against every component and the prior
// candidate, the spawn decision is taken, and the winner acts, trains and
// owns the period's transitions from then on. Masses and the next MAP
// component come from the period's newest batch_size transitions.
void run_mixture(Context& ctx, const ddpg::AgentParams* prior) {
  const auto& c = ctx.config;
  Rng init = make_rng(c.seed, Stream::ComponentInit);
  Agent templ = Agent::create(ctx.agent_cfg, init);
  if (prior != nullptr) {
    templ = Agent(ctx.agent_cfg, *prior);
    templ.reset_optimizers();
  }
  ctx.result.mixture = dpmm::make_mixture(std::move(templ), c.xi, c.sigma, !c.spawn);
  auto& mix = *ctx.result.mixture;
  std::vector<ReplayBuffer> buffers;
  if (!c.spawn) buffers.emplace_back(c.buffer_capacity);

  std::size_t map_index = 0;
  const auto& tasks = ctx.result.tasks;
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    const int task_no = static_cast<int>(t) + 1;
    envs::Environment env(tasks.tasks[t]);
    std::vector<Transition> ident;
    ident.reserve(c.batch_size);
    std::deque<Transition> newest;
    bool decided = false;
    bool spawned = false;
    std::size_t active = map_index;
    std::vector<EpisodeRecord> pending;
    std::vector<double> decision_ll;
    // A single pinned component makes the decision independent of the data.
    if (!c.spawn) decided = true;

    auto train_from = [&](std::size_t b) {
      if (buffers[b].size() < c.batch_size) return;
      const auto batch = ddpg::make_batch(buffers[b].sample(c.batch_size, ctx.replay));
      dpmm::run_em(mix, batch, c.em_epsilon, c.em_max_iters);
    };

    bool spawn_marked = false;
    auto emit = [&](EpisodeRecord r) {
      r.component = static_cast<int>(active) + 1;
      r.L = static_cast<int>(mix.size());
      r.spawned = spawned && !spawn_marked;
      spawn_marked = true;
      ctx.emit(r, mix.components[active].agent);
    };

    auto decide = [&] {
      const auto batch = ddpg::make_batch(ident);
      if (c.spawn) {
        const auto r = dpmm::posterior(mix, batch, true);
        decision_ll = r.log_likes;
        spawned = dpmm::maybe_spawn(mix, r);
        if (spawned) {
          buffers.emplace_back(c.buffer_capacity);
          active = mix.size() - 1;
        } else {
          const auto best = std::max_element(r.values.begin(), r.values.end() - 1);
          active = static_cast<std::size_t>(best - r.values.begin());
        }
      } else {
        active = dpmm::posterior(mix, batch, false).argmax();
      }
      for (const auto& tr : ident) buffers[active].push(tr);
      decided = true;
      for (const auto& r : pending) emit(r);
      pending.clear();
    };

    auto acting = [&]() -> const Agent& {
      if (decided) return mix.components[active].agent;
      if (mix.components.empty()) return mix.prior;
      return mix.components[map_index].agent;
    };

    for (int j = 0; j < c.episodes_per_task; ++j) {
      const auto stats = ddpg::run_episode(
          env,
          [&](std::span<const double> s) {
            return acting().select_action(s, ctx.noise, ctx.exploration);
          },
          [&](const Transition& tr) {
            if (ident.size() < c.batch_size) ident.push_back(tr);
            newest.push_back(tr);
            if (newest.size() > c.batch_size) newest.pop_front();
            if (decided) {
              buffers[active].push(tr);
              train_from(active);
            } else if (ident.size() == c.batch_size) {
              decide();
            }
          });
      const EpisodeRecord rec{task_no, j + 1, stats.ret, stats.steps, 0, 0, false};
      if (decided) {
        emit(rec);
      } else {
        pending.push_back(rec);
      }
    }
    if (!decided) decide();

    const std::vector<Transition> last(newest.begin(), newest.end());
    const auto batch = ddpg::make_batch(last);
    const auto r_end = dpmm::posterior(mix, batch, false);
    dpmm::update_masses(mix, r_end);
    map_index = dpmm::map_identify(mix, batch);

    ClusterRecord cr;
    cr.task = task_no;
    cr.goal = tasks.tasks[t].goal;
    cr.center = tasks.center_of.empty() ? -1 : tasks.center_of[t];
    cr.cluster = static_cast<int>(r_end.argmax()) + 1;
    cr.active = static_cast<int>(active) + 1;
    cr.L = static_cast<int>(mix.size());
    cr.spawned = spawned;
    cr.decision_log_likes = decision_ll;
    ctx.result.clusters.push_back(cr);
    ctx.out.cluster(cr);
    std::string ll;
    for (double x : decision_ll) ll += " " + fmt(x);
    ctx.log_task(task_no, " L=" + std::to_string(mix.size()) + (spawned ? " (spawned)" : "") +
                              " component " + std::to_string(active + 1) +
                              " log-likelihoods" + ll);
  }
}

}  // namespace

RunResult run_lifelong(const RunConfig& config, const RunHooks& hooks,
                       const ddpg::AgentParams* prior) {
  validate(config, prior != nullptr);
  std::optional<ddpg::AgentParams> loaded;
  if (uses_prior(config.method) && prior == nullptr) {
    try {
      loaded = robust_prior::load_prior(config.prior_path);
    } catch (const std::exception& e) {
      throw ConfigError("cannot load prior from " + config.prior_path + ": " + e.what());
    }
    prior = &*loaded;
  }
  if (!uses_prior(config.method)) prior = nullptr;

  RunResult result;
  result.tasks = make_tasks(config);
  const auto agent_cfg = agent_config(config);
  if (prior != nullptr) {
    try {
      Agent check(agent_cfg, *prior);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("prior does not match the run: ") + e.what());
    }
  }

  OutputFiles out(config, result.tasks);
  Context ctx{config,
              hooks,
              agent_cfg,
              ddpg::default_noise(envs::env_spec(config.domain), config.noise),
              make_rng(config.seed, Stream::Exploration),
              make_rng(config.seed, Stream::ReplaySampling),
              result,
              out};
  try {
    switch (config.method) {
      case Method::FineTune:
      case Method::FromScratch:
      case Method::Robust:
        run_single_model(ctx, prior);
        break;
      case Method::Reservoir:
        run_reservoir(ctx);
        break;
      case Method::Dpmm:
      case Method::DpmmRobust:
        run_mixture(ctx, prior);
        break;
    }
  } catch (const nnet::NonFiniteError& e) {
    result.failed = true;
    result.error = e.what();
  }
  out.finish(config, result);
  return result;
}

MethodSummary summarize_episodes(const std::vector<EpisodeRecord>& rows,
                                 const std::string& method) {
  if (rows.empty()) throw std::invalid_argument("no episodes to summarize");
  MethodSummary s;
  s.method = method;
  s.episodes = rows.size();
  std::map<int, std::pair<double, int>> per_task;
  double total = 0.0;
  for (const auto& r : rows) {
    total += r.ret;
    auto& [sum, n] = per_task[r.task];
    sum += r.ret;
    ++n;
  }
  s.mean_return = total / static_cast<double>(rows.size());
  for (const auto& [task, acc] : per_task) s.task_means.push_back(acc.first / acc.second);
  const auto T = static_cast<double>(s.task_means.size());
  if (s.task_means.size() > 1) {
    const double mu = std::accumulate(s.task_means.begin(), s.task_means.end(), 0.0) / T;
    double ss = 0.0;
    for (double x : s.task_means) ss += (x - mu) * (x - mu);
    s.standard_error = std::sqrt(ss / (T - 1.0)) / std::sqrt(T);
  }
  return s;
}

std::vector<CurvePoint> bootstrap_curve(const std::vector<EpisodeRecord>& rows, int resamples,
                                        std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("no episodes to summarize");
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  // returns[episode][task]; tasks missing an episode index are skipped there.
  std::map<int, std::vector<double>> by_episode;
  for (const auto& r : rows) by_episode[r.episode].push_back(r.ret);
  Rng rng = make_rng(seed, Stream::Bootstrap);
  std::vector<CurvePoint> curve;
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (const auto& [episode, values] : by_episode) {
    const std::size_t n = values.size();
    CurvePoint p;
    p.episode = episode;
    p.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& m : means) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += values[pick(rng)];
      m = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(means.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, means.size() - 1);
      return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    p.ci_low = std::min(quantile(0.025), p.mean);
    p.ci_high = std::max(quantile(0.975), p.mean);
    curve.push_back(p);
  }
  return curve;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename Row, typename Parse>
std::vector<Row> read_csv(const fs::path& path, const std::string& expected_prefix, Parse parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind(expected_prefix, 0) != 0) {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  const auto header = split_csv(line);
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " columns, got " +
                               std::to_string(cells.size()));
    }
    try {
      rows.push_back(parse(cells));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed value");
    }
  }
  return rows;
}

}  // namespace

std::vector<EpisodeRecord> read_episodes_csv(const fs::path& path) {
  return read_csv<EpisodeRecord>(
      path, "task,episode,return,steps,component,L,spawned", [](const auto& c) {
        return EpisodeRecord{std::stoi(c[0]), std::stoi(c[1]), std::stod(c[2]), std::stoi(c[3]),
                             std::stoi(c[4]),  std::stoi(c[5]), c[6] == "1"};
      });
}

std::vector<ClusterRecord> read_clusters_csv(const fs::path& path) {
  return read_csv<ClusterRecord>(path, "task,goal_1", [](const auto& c) {
    ClusterRecord r;
    const std::size_t n = c.size();
    r.task = std::stoi(c[0]);
    for (std::size_t i = 1; i + 5 < n; ++i) r.goal.push_back(std::stod(c[i]));
    r.center = std::stoi(c[n - 5]);
    r.cluster = std::stoi(c[n - 4]);
    r.active = std::stoi(c[n - 3]);
    r.L = std::stoi(c[n - 2]);
    r.spawned = c[n - 1] == "1";
    return r;
  });
}

nlohmann::json published_reference() {
  return {
      {"label", "paper-reported"},
      {"note", "published averages over 200 learning episodes and T=50 tasks "
               "(mean, standard error); static context, not produced by this run"},
      {"navigation2d",
       {{"finetune", {-31.73, 0.51}},
        {"reservoir", {-28.78, 0.48}},
        {"consolidation", {-22.01, 0.64}},
        {"progressive", {-15.47, 2.07}},
        {"fromscratch", {-49.79, 4.61}},
        {"robust", {-9.08, 0.66}},
        {"dpmm", {-3.37, 0.46}},
        {"dpmm+robust", {-1.23, 0.17}}}},
      {"reacher",
       {{"finetune", {-8.58, 0.20}},
        {"reservoir", {-4.22, 0.07}},
        {"consolidation", {-9.18, 0.19}},
        {"progressive", {-4.30, 0.18}},
        {"fromscratch", {-11.12, 0.08}},
        {"robust", {-7.45, 0.18}},
        {"dpmm", {-4.78, 0.16}},
        {"dpmm+robust", {-2.63, 0.11}}}},
      {"hopper",
       {{"finetune", {-4.56, 0.08}},
        {"reservoir", {-4.71, 0.02}},
        {"consolidation", {-4.36, 0.08}},
        {"progressive", {-2.62, 0.15}},
        {"fromscratch", {-7.50, 0.33}},
        {"robust", {-4.14, 0.18}},
        {"dpmm", {-0.75, 0.14}},
        {"dpmm+robust", {0.05, 0.11}}}}};
}

nlohmann::json summarize(const fs::path& dir) {
  struct Source {
    std::string name;
    fs::path path;
    std::string status;
  };
  std::vector<Source> sources;
  auto consider = [&](const fs::path& d) {
    if (!fs::is_regular_file(d / "episodes.csv")) return;
    Source s{d.filename().string(), d, "unknown"};
    if (s.name.empty()) s.name = fs::absolute(d).parent_path().filename().string();
    std::ifstream in(d / "run.json");
    if (in) {
      try {
        const auto j = nlohmann::json::parse(in);
        s.name = j.at("config").at("method").get<std::string>();
        s.status = j.value("status", "unknown");
      } catch (const nlohmann::json::exception&) {
      }
    }
    sources.push_back(std::move(s));
  };
  consider(dir);
  if (fs::is_directory(dir)) {
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory()) subs.push_back(e.path());
    }
    std::sort(subs.begin(), subs.end());
    for (const auto& s : subs) consider(s);
  }
  if (sources.empty()) throw std::runtime_error("no episodes.csv under " + dir.string());

  nlohmann::json methods = nlohmann::json::object();
  std::ofstream plot(dir / "plotdata.csv", std::ios::trunc);
  plot << "method,episode,mean,ci_low,ci_high\n";
  bool any_failed = false;
  for (const auto& src : sources) {
    const auto rows = read_episodes_csv(src.path / "episodes.csv");
    if (rows.empty()) throw std::runtime_error(src.path.string() + "/episodes.csv is empty");
    std::string key = src.name;
    for (int k = 2; methods.contains(key); ++k) key = src.name + "#" + std::to_string(k);
    const auto s = summarize_episodes(rows, key);
    methods[key] = {{"mean_return", s.mean_return},
                    {"standard_error", s.standard_error},
                    {"tasks", s.task_means.size()},
                    {"episodes", s.episodes},
                    {"task_means", s.task_means},
                    {"status", src.status},
                    {"source", fs::relative(src.path / "episodes.csv", dir).string()}};
    any_failed = any_failed || src.status == "failed";
    for (const auto& p : bootstrap_curve(rows)) {
      plot << key << ',' << p.episode << ',' << fmt(p.mean) << ',' << fmt(p.ci_low) << ','
           << fmt(p.ci_high) << '\n';
    }
  }
  nlohmann::json summary{{"status", any_failed ? "failed" : "completed"},
                         {"methods", methods},
                         {"reference", published_reference()}};
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  out << summary.dump(2) << '\n';
  return summary;
}

}  // namespace dprl::harness
