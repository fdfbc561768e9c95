// dprl: pretrain a robust prior, run lifelong methods, summarize runs and
// generate task sequences.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dprl/envs.hpp"
#include "dprl/harness.hpp"
#include "dprl/robust_prior.hpp"

namespace {

using namespace dprl;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericFailure = 3;

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw harness::ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw harness::ConfigError(path + ": " + e.what());
  }
}

// Flag values; unset ones leave the JSON config (or the default) alone.
struct RunFlags {
  std::string config;
  std::optional<std::string> domain, method, prior, structure, out, task_file, optimizer;
  std::optional<int> tasks, episodes, em_iters;
  std::optional<std::uint64_t> seed;
  std::optional<double> xi, sigma, lr, gamma, tau, noise, penalty, em_epsilon;
  std::optional<std::size_t> width, layers, batch, buffer;
  bool no_spawn = false;
  bool quiet = false;
};

void add_common_training_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--domain", f.domain, "navigation2d | reacher | tracker");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--hidden-width", f.width, "hidden layer width");
  cmd->add_option("--hidden-layers", f.layers, "number of hidden layers");
  cmd->add_option("--lr", f.lr, "actor and critic learning rate");
  cmd->add_option("--gamma", f.gamma, "discount factor");
  cmd->add_option("--tau", f.tau, "target network soft-update rate");
  cmd->add_option("--noise", f.noise, "exploration stddev as a fraction of the action half-range");
  cmd->add_option("--batch-size", f.batch, "minibatch size");
  cmd->add_option("--buffer", f.buffer, "replay buffer capacity");
  cmd->add_option("--optimizer", f.optimizer, "adam | sgd");
  cmd->add_option("--penalty", f.penalty, "actor pre-activation penalty weight");
  cmd->add_flag("--quiet", f.quiet, "no progress output");
}

harness::RunConfig apply_flags(harness::RunConfig c, const RunFlags& f) {
  try {
    if (f.domain) c.domain = envs::domain_from_string(*f.domain);
    if (f.method) c.method = harness::method_from_string(*f.method);
    if (f.optimizer) c.optimizer = nnet::optimizer_kind_from_string(*f.optimizer);
  } catch (const std::invalid_argument& e) {
    throw harness::ConfigError(e.what());
  }
  if (f.prior) c.prior_path = *f.prior;
  if (f.structure) c.task_structure = *f.structure;
  if (f.out) c.output_dir = *f.out;
  if (f.task_file) c.task_file = *f.task_file;
  if (f.tasks) c.tasks = *f.tasks;
  if (f.episodes) c.episodes_per_task = *f.episodes;
  if (f.em_iters) c.em_max_iters = *f.em_iters;
  if (f.seed) c.seed = *f.seed;
  if (f.xi) c.xi = *f.xi;
  if (f.sigma) c.sigma = *f.sigma;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.gamma) c.gamma = *f.gamma;
  if (f.tau) c.tau = *f.tau;
  if (f.noise) c.noise = *f.noise;
  if (f.penalty) c.preactivation_penalty = *f.penalty;
  if (f.em_epsilon) c.em_epsilon = *f.em_epsilon;
  if (f.width) c.hidden_width = *f.width;
  if (f.layers) c.hidden_layers = *f.layers;
  if (f.batch) c.batch_size = *f.batch;
  if (f.buffer) c.buffer_capacity = *f.buffer;
  if (f.no_spawn) c.spawn = false;
  return c;
}

harness::RunConfig resolve_run_config(const RunFlags& f) {
  harness::RunConfig c;
  if (!f.config.empty()) c = harness::config_from_json(read_config_file(f.config));
  return apply_flags(std::move(c), f);
}

int cmd_run(const RunFlags& f) {
  const auto c = resolve_run_config(f);
  if (c.output_dir.empty()) throw harness::ConfigError("run needs --out DIR");
  harness::RunHooks hooks;
  if (!f.quiet) hooks.log = &std::cerr;
  const auto result = harness::run_lifelong(c, hooks);
  if (result.failed) {
    std::cerr << "run aborted: " << result.error << '\n';
    return kNumericFailure;
  }
  const auto s = harness::summarize_episodes(result.episodes, harness::to_string(c.method));
  std::cout << s.method << ": mean return " << s.mean_return << " +/- " << s.standard_error
            << " over " << s.task_means.size() << " tasks";
  if (result.mixture) std::cout << ", L=" << result.mixture->size();
  std::cout << '\n';
  return kOk;
}

int cmd_pretrain(const RunFlags& f, std::optional<int> m, std::optional<int> per_task) {
  robust_prior::PretrainConfig pc;
  json j = f.config.empty() ? json::object() : read_config_file(f.config);
  // The run-config keys shared with `run` are accepted here too.
  json run_keys = json::object();
  std::string out;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "m") pc.spec.m = v.get<int>();
      else if (key == "episodes") pc.spec.episodes_per_task = v.get<int>();
      else if (key == "out") out = v.get<std::string>();
      else run_keys[key] = v;
    }
  } catch (const json::exception& e) {
    throw harness::ConfigError(std::string("bad config value: ") + e.what());
  }
  auto merged = apply_flags(harness::config_from_json(run_keys), f);
  if (m) pc.spec.m = *m;
  if (per_task) pc.spec.episodes_per_task = *per_task;
  if (f.out) out = *f.out;
  if (out.empty()) throw harness::ConfigError("pretrain needs --out DIR");
  if (pc.spec.m < 1) throw harness::ConfigError("--m must be >= 1");
  if (pc.spec.episodes_per_task < 1) throw harness::ConfigError("--episodes must be >= 1");
  merged.method = harness::Method::FineTune;  // validation only; no prior needed
  harness::validate(merged);

  pc.spec.domain = merged.domain;
  pc.spec.seed = merged.seed;
  pc.agent = harness::agent_config(merged);
  pc.batch_size = merged.batch_size;
  pc.buffer_capacity = merged.buffer_capacity;
  pc.noise_fraction = merged.noise;

  const auto result = robust_prior::train_robust_prior(pc);
  robust_prior::save_prior(result.params, out);
  json meta{{"domain", envs::to_string(pc.spec.domain)},
            {"m", pc.spec.m},
            {"episodes_per_task", pc.spec.episodes_per_task},
            {"seed", pc.spec.seed},
            {"config", harness::to_json(merged)}};
  json goals = json::array();
  for (const auto& t : result.tasks) goals.push_back(t.goal);
  meta["tasks"] = goals;
  std::ofstream(std::filesystem::path(out) / "prior.json") << meta.dump(2) << '\n';
  if (!f.quiet) {
    const auto n = result.critic_losses.size();
    std::cerr << "pretrained on " << pc.spec.m << " tasks, " << result.episodes.size()
              << " episodes, " << n << " updates\n";
  }
  std::cout << "prior written to " << out << '\n';
  return kOk;
}

int cmd_taskgen(const std::string& domain, int tasks, std::uint64_t seed,
                const std::string& structure, const std::string& out) {
  envs::TaskSequence seq;
  try {
    seq = envs::sample_task_sequence(envs::domain_from_string(domain), tasks, seed,
                                     envs::parse_structure(structure));
  } catch (const std::invalid_argument& e) {
    throw harness::ConfigError(e.what());
  }
  envs::save_task_sequence(seq, out);
  std::cout << seq.tasks.size() << " tasks written to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong RL with a Dirichlet process mixture of DDPG task models"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run one lifelong method over a task sequence");
  add_common_training_flags(run, run_flags);
  run->add_option("--method", run_flags.method,
                  "finetune | reservoir | fromscratch | robust | dpmm | dpmm+robust");
  run->add_option("--tasks", run_flags.tasks, "number of tasks T");
  run->add_option("--episodes", run_flags.episodes, "episodes per task J");
  run->add_option("--xi", run_flags.xi, "CRP concentration");
  run->add_option("--sigma", run_flags.sigma, "likelihood scale");
  run->add_option("--prior", run_flags.prior, "directory written by pretrain");
  run->add_option("--structure", run_flags.structure, "uniform | kclusters:K:SPREAD");
  run->add_option("--task-file", run_flags.task_file, "replay a task sequence JSON");
  run->add_option("--em-iters", run_flags.em_iters, "EM iterations per batch");
  run->add_option("--em-epsilon", run_flags.em_epsilon, "EM parameter-change threshold");
  run->add_flag("--no-spawn", run_flags.no_spawn, "keep a single mixture component");
  run->add_option("--out", run_flags.out, "output directory");

  RunFlags pre_flags;
  std::optional<int> pre_m, pre_episodes;
  auto* pretrain = app.add_subcommand("pretrain", "train the robust prior");
  add_common_training_flags(pretrain, pre_flags);
  pretrain->add_option("--m", pre_m, "number of pretraining tasks");
  pretrain->add_option("--episodes", pre_episodes, "episodes per pretraining task");
  pretrain->add_option("--out", pre_flags.out, "output directory");

  std::string sum_in;
  auto* summarize = app.add_subcommand("summarize", "write summary.json and plotdata.csv");
  summarize->add_option("--in", sum_in, "run directory or a directory of runs")->required();

  std::string tg_domain = "navigation2d", tg_structure = "uniform", tg_out;
  int tg_tasks = 20;
  std::uint64_t tg_seed = 0;
  auto* taskgen = app.add_subcommand("taskgen", "write a task sequence JSON");
  taskgen->add_option("--domain", tg_domain, "navigation2d | reacher | tracker");
  taskgen->add_option("--tasks", tg_tasks, "number of tasks");
  taskgen->add_option("--seed", tg_seed, "task sampler seed");
  taskgen->add_option("--structure", tg_structure, "uniform | kclusters:K:SPREAD");
  taskgen->add_option("--out", tg_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*pretrain) return cmd_pretrain(pre_flags, pre_m, pre_episodes);
    if (*summarize) {
      const auto s = harness::summarize(sum_in);
      for (const auto& [name, v] : s.at("methods").items()) {
        std::cout << name << ": mean return " << v.at("mean_return").get<double>() << " +/- "
                  << v.at("standard_error").get<double>() << '\n';
      }
      return kOk;
    }
    if (*taskgen) return cmd_taskgen(tg_domain, tg_tasks, tg_seed, tg_structure, tg_out);
  } catch (const nnet::NonFiniteError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}
