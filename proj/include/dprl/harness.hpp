#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dprl/ddpg.hpp"
#include "dprl/dpmm.hpp"
#include "dprl/envs.hpp"

namespace dprl::harness {

enum class Method { FineTune, Reservoir, FromScratch, Robust, Dpmm, DpmmRobust };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
bool uses_prior(Method m);
bool is_dpmm(Method m);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  envs::Domain domain = envs::Domain::Navigation2D;
  Method method = Method::Dpmm;
  int tasks = 20;
  int episodes_per_task = 100;
  std::uint64_t seed = 0;
  double xi = 1.0;
  double sigma = 1.0;
  std::size_t hidden_width = 64;
  std::size_t hidden_layers = 2;
  double learning_rate = 1e-3;  // actor and critic
  double gamma = 0.99;
  double tau = 0.005;
  double noise = 0.1;  // exploration stddev as a fraction of the action half-range
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 50000;
  std::string prior_path;
  std::string task_structure = "uniform";
  std::string task_file;  // replaces generated tasks; T becomes its length
  std::string output_dir;
  nnet::OptimizerKind optimizer = nnet::OptimizerKind::Adam;
  double preactivation_penalty = 1e-2;
  double em_epsilon = 1e-4;
  int em_max_iters = 5;
  bool spawn = true;  // false pins the mixture to a single component
};

// Throws ConfigError describing the first invalid field.
void validate(const RunConfig& config, bool prior_in_memory = false);

nlohmann::json to_json(const RunConfig& config);
// Keys absent from `j` keep their value in `base`; unknown keys are errors.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

ddpg::AgentConfig agent_config(const RunConfig& config);

// Generated from (seed, structure) or read from task_file.
envs::TaskSequence make_tasks(const RunConfig& config);

struct EpisodeRecord {
  int task = 0;     // 1-based
  int episode = 0;  // 1-based within the task
  double ret = 0.0;
  int steps = 0;
  int component = 0;  // 1-based active component; 0 for single-model methods
  int L = 0;
  bool spawned = false;  // first row of a period that created a component
};

struct ClusterRecord {
  int task = 0;
  std::vector<double> goal;
  int center = -1;   // generating center when known
  int cluster = 0;   // argmax of the end-of-period responsibilities
  int active = 0;    // component that acted and trained during the period
  int L = 0;         // after the period
  bool spawned = false;
  // Identification-batch log-likelihoods at the decision, candidate last.
  std::vector<double> decision_log_likes;
};

struct RunResult {
  envs::TaskSequence tasks;
  std::vector<EpisodeRecord> episodes;
  std::vector<ClusterRecord> clusters;
  std::optional<dpmm::MixtureState> mixture;
  bool failed = false;
  std::string error;
};

struct RunHooks {
  // Called after each episode with the agent that acted in it.
  std::function<void(const EpisodeRecord&, const ddpg::Agent&)> on_episode;
  std::ostream* log = nullptr;  // one progress line per task
};

// Runs one method over the whole task sequence. Files are written only when
// output_dir is set. A non-finite value aborts the run; the result is then
// flagged failed and everything recorded so far is kept.
RunResult run_lifelong(const RunConfig& config, const RunHooks& hooks = {},
                       const ddpg::AgentParams* prior = nullptr);

struct MethodSummary {
  std::string method;
  double mean_return = 0.0;  // over all episodes
  double standard_error = 0.0;  // sample std of the per-task means / sqrt(T)
  std::vector<double> task_means;
  std::size_t episodes = 0;
};

MethodSummary summarize_episodes(const std::vector<EpisodeRecord>& rows,
                                 const std::string& method);

struct CurvePoint {
  int episode = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Mean return per episode index across tasks with a percentile bootstrap
// over tasks.
std::vector<CurvePoint> bootstrap_curve(const std::vector<EpisodeRecord>& rows,
                                        int resamples = 1000, std::uint64_t seed = 0);

std::vector<EpisodeRecord> read_episodes_csv(const std::filesystem::path& path);
std::vector<ClusterRecord> read_clusters_csv(const std::filesystem::path& path);

// Summarizes <dir>/episodes.csv and every <dir>/<sub>/episodes.csv into
// <dir>/summary.json and <dir>/plotdata.csv. Returns the summary.
nlohmann::json summarize(const std::filesystem::path& dir);

// Published averages shipped as static context in summary.json.
nlohmann::json published_reference();

}  // namespace dprl::harness
