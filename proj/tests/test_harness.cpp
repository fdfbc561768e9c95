#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "dprl/harness.hpp"
#include "dprl/robust_prior.hpp"
#include "support.hpp"

using namespace dprl;
using harness::EpisodeRecord;
using harness::Method;
using harness::RunConfig;

namespace {

RunConfig tiny_run(Method m, int tasks = 2, int episodes = 3) {
  RunConfig c;
  c.method = m;
  c.tasks = tasks;
  c.episodes_per_task = episodes;
  c.seed = 21;
  c.hidden_width = 16;
  c.batch_size = 16;
  c.buffer_capacity = 2000;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<EpisodeRecord> rows_with_returns(const std::vector<std::vector<double>>& per_task) {
  std::vector<EpisodeRecord> rows;
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    for (std::size_t e = 0; e < per_task[t].size(); ++e) {
      rows.push_back({static_cast<int>(t) + 1, static_cast<int>(e) + 1, per_task[t][e], 10, 0, 0,
                      false});
    }
  }
  return rows;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("summary of a constant return has zero standard error") {
  const auto s = harness::summarize_episodes(rows_with_returns({{-4, -4}, {-4, -4}, {-4, -4}}),
                                             "x");
  CHECK(s.mean_return == -4.0);
  CHECK(s.standard_error == 0.0);
  CHECK(s.task_means.size() == 3);
  CHECK(s.episodes == 6);
}

TEST_CASE("summary standard error is over per-task means") {
  // Task means 0 and 2: sample std sqrt(2), divided by sqrt(2).
  const auto s = harness::summarize_episodes(rows_with_returns({{-1, 1}, {1, 3}}), "x");
  CHECK(s.mean_return == doctest::Approx(1.0));
  CHECK(s.standard_error == doctest::Approx(1.0));
  CHECK_THROWS_AS(harness::summarize_episodes({}, "x"), std::invalid_argument);
}

TEST_CASE("bootstrap interval collapses on constant returns and brackets the mean") {
  const auto flat = harness::bootstrap_curve(rows_with_returns({{2, 5}, {2, 5}, {2, 5}}), 200, 1);
  REQUIRE(flat.size() == 2);
  CHECK(flat[0].ci_low == 2.0);
  CHECK(flat[0].ci_high == 2.0);
  CHECK(flat[1].mean == 5.0);

  const auto spread = harness::bootstrap_curve(rows_with_returns({{0}, {1}, {2}, {3}, {10}}));
  REQUIRE(spread.size() == 1);
  CHECK(spread[0].ci_low <= spread[0].mean);
  CHECK(spread[0].ci_high >= spread[0].mean);
  CHECK(spread[0].ci_low >= 0.0);
  CHECK(spread[0].ci_high <= 10.0);
  CHECK(spread[0].ci_high > spread[0].ci_low);
  CHECK_THROWS(harness::bootstrap_curve(rows_with_returns({{1}}), 0));
}

TEST_CASE("method names parse leniently and reject unknowns") {
  CHECK(harness::method_from_string("DPMM+Robust") == Method::DpmmRobust);
  CHECK(harness::method_from_string("from_scratch") == Method::FromScratch);
  CHECK(harness::method_from_string("fine-tune") == Method::FineTune);
  for (auto m : {Method::FineTune, Method::Reservoir, Method::FromScratch, Method::Robust,
                 Method::Dpmm, Method::DpmmRobust}) {
    CHECK(harness::method_from_string(harness::to_string(m)) == m);
  }
  CHECK_THROWS_AS(harness::method_from_string("ewc"), harness::ConfigError);
}

TEST_CASE("config validation names the bad field") {
  auto c = tiny_run(Method::Dpmm);
  CHECK_NOTHROW(harness::validate(c));
  c.gamma = 1.0;
  CHECK_THROWS_WITH_AS(harness::validate(c), doctest::Contains("gamma"), harness::ConfigError);
  c = tiny_run(Method::Robust);
  CHECK_THROWS_WITH_AS(harness::validate(c), doctest::Contains("prior"), harness::ConfigError);
  CHECK_NOTHROW(harness::validate(c, true));
  c = tiny_run(Method::Dpmm);
  c.xi = 0.0;
  CHECK_THROWS_AS(harness::validate(c), harness::ConfigError);
  c = tiny_run(Method::Dpmm);
  c.task_structure = "kclusters:0:0.1";
  CHECK_THROWS_AS(harness::validate(c), harness::ConfigError);
}

TEST_CASE("config JSON round trips and rejects unknown keys") {
  auto c = tiny_run(Method::DpmmRobust);
  c.prior_path = "p";
  c.xi = 0.25;
  c.spawn = false;
  c.optimizer = nnet::OptimizerKind::Sgd;
  const auto j = harness::to_json(c);
  const auto back = harness::config_from_json(j);
  CHECK(harness::to_json(back) == j);

  const auto partial = harness::config_from_json(nlohmann::json{{"tasks", 7}}, c);
  CHECK(partial.tasks == 7);
  CHECK(partial.xi == 0.25);
  CHECK_THROWS_WITH_AS(harness::config_from_json(nlohmann::json{{"taks", 7}}),
                       doctest::Contains("taks"), harness::ConfigError);
  CHECK_THROWS_AS(harness::config_from_json(nlohmann::json{{"tasks", "seven"}}),
                  harness::ConfigError);
  CHECK_THROWS_AS(harness::config_from_json(nlohmann::json::array()), harness::ConfigError);
}

TEST_CASE("from-scratch starts every task from a fresh seeded initialization") {
  auto c = tiny_run(Method::FromScratch, 3, 1);
  c.batch_size = 128;  // more than one episode's transitions, so no update happens
  const auto agent_cfg = harness::agent_config(c);
  int calls = 0;
  harness::RunHooks hooks;
  hooks.on_episode = [&](const EpisodeRecord& r, const ddpg::Agent& a) {
    ++calls;
    Rng init = make_rng(c.seed, Stream::ComponentInit, static_cast<std::uint64_t>(r.task - 1));
    const auto fresh = ddpg::Agent::create(agent_cfg, init);
    CHECK(a.params().actor.params() == fresh.params().actor.params());
    CHECK(a.params().critic.params() == fresh.params().critic.params());
  };
  const auto result = harness::run_lifelong(c, hooks);
  CHECK(calls == 3);
  CHECK(result.episodes.size() == 3);
  CHECK_FALSE(result.mixture.has_value());
}

TEST_CASE("fine-tune equals a pinned single-component mixture, bitwise") {
  auto c = tiny_run(Method::FineTune, 3, 4);
  c.optimizer = nnet::OptimizerKind::Sgd;
  c.learning_rate = 1e-2;
  c.em_max_iters = 1;
  std::vector<nnet::ParamVector> ft_actor, ft_critic;
  harness::RunHooks ft_hooks;
  ft_hooks.on_episode = [&](const EpisodeRecord&, const ddpg::Agent& a) {
    ft_actor.push_back(a.params().actor.params());
    ft_critic.push_back(a.params().critic.params());
  };
  const auto ft = harness::run_lifelong(c, ft_hooks);

  c.method = Method::Dpmm;
  c.spawn = false;
  std::size_t i = 0;
  harness::RunHooks mix_hooks;
  mix_hooks.on_episode = [&](const EpisodeRecord& r, const ddpg::Agent& a) {
    REQUIRE(i < ft_actor.size());
    CHECK(r.component == 1);
    CHECK(r.L == 1);
    CHECK(a.params().actor.params() == ft_actor[i]);
    CHECK(a.params().critic.params() == ft_critic[i]);
    ++i;
  };
  const auto mix = harness::run_lifelong(c, mix_hooks);
  CHECK(i == ft_actor.size());
  REQUIRE(mix.episodes.size() == ft.episodes.size());
  for (std::size_t k = 0; k < ft.episodes.size(); ++k) {
    CHECK(mix.episodes[k].ret == ft.episodes[k].ret);
    CHECK(mix.episodes[k].steps == ft.episodes[k].steps);
  }
}

TEST_CASE("a DPMM run writes consistent episode and cluster records") {
  test::TempDir dir("dpmm_run");
  auto c = tiny_run(Method::Dpmm, 4, 3);
  c.task_structure = "kclusters:2:0.05";
  c.output_dir = (dir.path() / "run").string();
  const auto result = harness::run_lifelong(c);
  REQUIRE_FALSE(result.failed);
  REQUIRE(result.mixture.has_value());

  const auto rows = harness::read_episodes_csv(dir.path() / "run" / "episodes.csv");
  REQUIRE(rows.size() == static_cast<std::size_t>(c.tasks * c.episodes_per_task));
  int prev_L = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    CHECK(r.task == static_cast<int>(k) / c.episodes_per_task + 1);
    CHECK(r.episode == static_cast<int>(k) % c.episodes_per_task + 1);
    CHECK(r.component >= 1);
    CHECK(r.component <= r.L);
    CHECK(r.L >= prev_L);
    if (r.spawned) CHECK(r.episode == 1);
    if (r.episode > 1) CHECK(r.L == rows[k - 1].L);
    prev_L = r.L;
    CHECK(r.ret == doctest::Approx(result.episodes[k].ret).epsilon(1e-8));
  }
  CHECK(rows.front().spawned);  // the mixture starts empty
  CHECK(rows.back().L == static_cast<int>(result.mixture->size()));

  const auto clusters = harness::read_clusters_csv(dir.path() / "run" / "clusters.csv");
  REQUIRE(clusters.size() == static_cast<std::size_t>(c.tasks));
  for (std::size_t t = 0; t < clusters.size(); ++t) {
    CHECK(clusters[t].task == static_cast<int>(t) + 1);
    REQUIRE(clusters[t].goal.size() == 2);
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(clusters[t].goal[d] == doctest::Approx(result.tasks.tasks[t].goal[d]).epsilon(1e-8));
    }
    CHECK(clusters[t].center == result.tasks.center_of[t]);
    CHECK(clusters[t].cluster >= 1);
    CHECK(clusters[t].cluster <= clusters[t].L);
    CHECK(clusters[t].active == rows[t * 3].component);
    CHECK(clusters[t].spawned == rows[t * 3].spawned);
  }
  CHECK(result.clusters.front().decision_log_likes.size() == 1);

  const auto saved = dpmm::load_mixture(dir.path() / "run" / "mixture", harness::agent_config(c));
  CHECK(saved.size() == result.mixture->size());
  for (std::size_t l = 0; l < saved.size(); ++l) {
    CHECK(saved.components[l].mass == result.mixture->components[l].mass);
  }

  const auto run_json = nlohmann::json::parse(slurp(dir.path() / "run" / "run.json"));
  CHECK(run_json.at("status") == "completed");
  CHECK(harness::config_from_json(run_json.at("config")).seed == c.seed);
  CHECK(std::filesystem::exists(dir.path() / "run" / "summary.json"));
  CHECK(std::filesystem::exists(dir.path() / "run" / "plotdata.csv"));
}

TEST_CASE("runs are deterministic under a seed") {
  auto c = tiny_run(Method::Dpmm, 2, 2);
  const auto a = harness::run_lifelong(c);
  const auto b = harness::run_lifelong(c);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t k = 0; k < a.episodes.size(); ++k) {
    CHECK(a.episodes[k].ret == b.episodes[k].ret);
    CHECK(a.episodes[k].component == b.episodes[k].component);
  }
  REQUIRE(a.mixture->size() == b.mixture->size());
  for (std::size_t l = 0; l < a.mixture->size(); ++l) {
    CHECK(a.mixture->components[l].mass == b.mixture->components[l].mass);
  }
  c.seed = 22;
  const auto other = harness::run_lifelong(c);
  CHECK(other.tasks.tasks != a.tasks.tasks);
}

TEST_CASE("replaying a task file reproduces the task table byte for byte") {
  test::TempDir dir("replay");
  auto c = tiny_run(Method::Reservoir, 3, 1);
  c.task_structure = "kclusters:2:0.05";
  c.output_dir = (dir.path() / "generated").string();
  (void)harness::run_lifelong(c);

  auto replay = tiny_run(Method::FineTune, 99, 1);
  replay.seed = 5;  // tasks must come from the file, not the seed
  replay.task_file = (dir.path() / "generated" / "tasks.json").string();
  replay.output_dir = (dir.path() / "replayed").string();
  const auto r = harness::run_lifelong(replay);
  CHECK(r.tasks.tasks.size() == 3);
  CHECK(slurp(dir.path() / "generated" / "tasks.csv") ==
        slurp(dir.path() / "replayed" / "tasks.csv"));

  replay.task_file = (dir.path() / "missing.json").string();
  CHECK_THROWS_AS(harness::run_lifelong(replay), harness::ConfigError);
}

TEST_CASE("a diverging run is flagged failed and keeps its partial records") {
  test::TempDir dir("diverge");
  auto c = tiny_run(Method::FineTune, 3, 3);
  c.optimizer = nnet::OptimizerKind::Sgd;
  c.learning_rate = 1e12;
  c.batch_size = 128;  // the first episode ends before any update
  c.output_dir = dir.path().string();
  const auto result = harness::run_lifelong(c);
  CHECK(result.failed);
  CHECK_FALSE(result.error.empty());
  CHECK(result.episodes.size() >= 1);
  CHECK(result.episodes.size() < 9);
  CHECK(harness::read_episodes_csv(dir.path() / "episodes.csv").size() == result.episodes.size());
  const auto run_json = nlohmann::json::parse(slurp(dir.path() / "run.json"));
  CHECK(run_json.at("status") == "failed");
  CHECK(run_json.contains("error"));
}

TEST_CASE("prior-based methods use the supplied prior") {
  robust_prior::PretrainConfig pc;
  pc.spec.m = 2;
  pc.spec.episodes_per_task = 1;
  pc.agent.hidden_width = 16;
  const auto prior = robust_prior::train_robust_prior(pc).params;
  auto c = tiny_run(Method::Robust, 2, 1);
  c.batch_size = 128;
  harness::RunHooks hooks;
  int calls = 0;
  hooks.on_episode = [&](const EpisodeRecord&, const ddpg::Agent& a) {
    ++calls;
    CHECK(a.params().actor.params() == prior.actor.params());
  };
  (void)harness::run_lifelong(c, hooks, &prior);
  CHECK(calls == 2);

  c.hidden_width = 32;
  CHECK_THROWS_WITH_AS(harness::run_lifelong(c, {}, &prior), doctest::Contains("prior"),
                       harness::ConfigError);
}

TEST_CASE("summarize collects every run below a directory") {
  test::TempDir dir("summary");
  for (auto m : {Method::FineTune, Method::Dpmm}) {
    auto c = tiny_run(m, 2, 2);
    c.output_dir = (dir.path() / harness::to_string(m)).string();
    (void)harness::run_lifelong(c);
  }
  const auto s = harness::summarize(dir.path());
  CHECK(s.at("status") == "completed");
  CHECK(s.at("methods").size() == 2);
  CHECK(s.at("methods").contains("finetune"));
  CHECK(s.at("methods").at("dpmm").at("tasks") == 2);
  CHECK(s.at("reference").at("label") == "paper-reported");

  std::ifstream plot(dir.path() / "plotdata.csv");
  std::string header;
  std::getline(plot, header);
  CHECK(header == "method,episode,mean,ci_low,ci_high");
  int lines = 0;
  for (std::string line; std::getline(plot, line);) ++lines;
  CHECK(lines == 4);

  test::TempDir empty("summary_empty");
  CHECK_THROWS(harness::summarize(empty.path()));
}

TEST_CASE("malformed episode tables are rejected with a line number") {
  test::TempDir dir("csv");
  const auto p = dir.path() / "episodes.csv";
  std::ofstream(p) << "task,episode,return,steps,component,L,spawned\n1,1,-3.5,10,0,0,0\n1,2,abc,10,0,0,0\n";
  CHECK_THROWS_WITH(harness::read_episodes_csv(p), doctest::Contains(":3"));
  std::ofstream(p) << "task,episode,return\n";
  CHECK_THROWS_WITH(harness::read_episodes_csv(p), doctest::Contains("header"));
  std::ofstream(p) << "task,episode,return,steps,component,L,spawned\n1,1\n";
  CHECK_THROWS_WITH(harness::read_episodes_csv(p), doctest::Contains("columns"));
  CHECK_THROWS(harness::read_episodes_csv(dir.path() / "nope.csv"));
}

}  // TEST_SUITE
