#include "dprl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dprl::envs {
namespace {

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_dims(std::span<const double> state, std::size_t state_dim,
                std::span<const double> action, std::size_t action_dim,
                const char* who) {
  if (state.size() != state_dim || action.size() != action_dim) {
    std::ostringstream os;
    os << who << ": expected state/action dims " << state_dim << "/" << action_dim
       << ", got " << state.size() << "/" << action.size();
    throw std::invalid_argument(os.str());
  }
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

}  // namespace

std::string to_string(Domain d) {
  switch (d) {
    case Domain::Navigation2D: return "navigation2d";
    case Domain::Reacher2Link: return "reacher";
    case Domain::VelocityTracker: return "tracker";
  }
  return "unknown";
}

Domain domain_from_string(const std::string& name) {
  if (name == "navigation2d" || name == "navigation" || name == "nav") {
    return Domain::Navigation2D;
  }
  if (name == "reacher") return Domain::Reacher2Link;
  if (name == "tracker" || name == "hopper") return Domain::VelocityTracker;
  throw std::invalid_argument("unknown domain '" + name + "'");
}

EnvSpec env_spec(Domain d) {
  switch (d) {
    case Domain::Navigation2D:
      return {2, 2, {-kNavMaxStep, -kNavMaxStep}, {kNavMaxStep, kNavMaxStep}, 100};
    case Domain::Reacher2Link:
      return {2, 2, {-kReacherMaxStep, -kReacherMaxStep},
              {kReacherMaxStep, kReacherMaxStep}, 100};
    case Domain::VelocityTracker:
      return {1, 1, {-kTrackerMaxStep}, {kTrackerMaxStep}, 100};
  }
  throw std::invalid_argument("unknown domain");
}

std::vector<double> initial_state(Domain d) {
  return d == Domain::VelocityTracker ? std::vector<double>{0.0}
                                      : std::vector<double>{0.0, 0.0};
}

StepResult nav_step(std::span<const double> state, std::span<const double> action,
                    const TaskParams& task) {
  check_dims(state, 2, action, 2, "nav_step");
  StepResult r;
  r.next_state.resize(2);
  double a_c[2];
  for (int i = 0; i < 2; ++i) {
    a_c[i] = clip(action[i], -kNavMaxStep, kNavMaxStep);
    r.next_state[i] = clip(state[i] + a_c[i], 0.0, 1.0);
  }
  const double dist = distance(r.next_state, task.goal);
  r.reward = -dist - kControlCost * squared_norm(a_c);
  r.terminal = dist < kNavSuccessRadius;
  return r;
}

std::vector<double> reacher_fingertip(std::span<const double> angles,
                                      const ReacherGeometry& g) {
  const double t1 = angles[0];
  const double t12 = angles[0] + angles[1];
  return {g.link1 * std::cos(t1) + g.link2 * std::cos(t12),
          g.link1 * std::sin(t1) + g.link2 * std::sin(t12)};
}

StepResult reacher_step(std::span<const double> state,
                        std::span<const double> action, const TaskParams& task,
                        const ReacherGeometry& geometry) {
  check_dims(state, 2, action, 2, "reacher_step");
  StepResult r;
  r.next_state.resize(2);
  double a_c[2];
  for (int i = 0; i < 2; ++i) {
    a_c[i] = clip(action[i], -kReacherMaxStep, kReacherMaxStep);
    r.next_state[i] = wrap_angle(state[i] + a_c[i]);
  }
  const auto tip = reacher_fingertip(r.next_state, geometry);
  const double dist = distance(tip, task.goal);
  r.reward = -dist - kControlCost * squared_norm(a_c);
  r.terminal = dist < geometry.success_radius;
  return r;
}

StepResult tracker_step(std::span<const double> state,
                        std::span<const double> action, const TaskParams& task) {
  check_dims(state, 1, action, 1, "tracker_step");
  StepResult r;
  const double a_c = clip(action[0], -kTrackerMaxStep, kTrackerMaxStep);
  const double v = clip(state[0] + a_c, kTrackerMinVelocity, kTrackerMaxVelocity);
  r.next_state = {v};
  r.reward = -std::abs(v - task.goal[0]) + kAliveBonus;
  r.terminal = false;
  return r;
}

double goal_distance(std::span<const double> state, const TaskParams& task,
                     const ReacherGeometry& geometry) {
  switch (task.domain) {
    case Domain::Navigation2D:
      return distance(state, task.goal);
    case Domain::Reacher2Link:
      return distance(reacher_fingertip(state, geometry), task.goal);
    case Domain::VelocityTracker:
      return std::abs(state[0] - task.goal[0]);
  }
  return 0.0;
}

bool goal_is_valid(const TaskParams& task, const ReacherGeometry& g) {
  for (double x : task.goal) {
    if (!std::isfinite(x)) return false;
  }
  switch (task.domain) {
    case Domain::Navigation2D:
      return task.goal.size() == 2 && task.goal[0] >= 0.0 && task.goal[0] <= 1.0 &&
             task.goal[1] >= 0.0 && task.goal[1] <= 1.0;
    case Domain::Reacher2Link: {
      if (task.goal.size() != 2) return false;
      const double r = norm(task.goal);
      return r >= std::abs(g.link1 - g.link2) - 1e-12 && r <= g.link1 + g.link2 + 1e-12;
    }
    case Domain::VelocityTracker:
      return task.goal.size() == 1 && task.goal[0] >= 0.0 && task.goal[0] <= 1.0;
  }
  return false;
}

Environment::Environment(TaskParams task, ReacherGeometry geometry)
    : task_(std::move(task)), geometry_(geometry), spec_(env_spec(task_.domain)) {
  if (!goal_is_valid(task_, geometry_)) {
    throw std::invalid_argument("task goal is outside the valid goal set for " +
                                to_string(task_.domain));
  }
  reset();
}

const std::vector<double>& Environment::reset() {
  state_ = initial_state(task_.domain);
  steps_ = 0;
  return state_;
}

StepResult Environment::step(std::span<const double> action) {
  if (steps_ >= spec_.horizon) {
    throw std::logic_error("step() called after the episode reached its horizon");
  }
  StepResult r;
  switch (task_.domain) {
    case Domain::Navigation2D: r = nav_step(state_, action, task_); break;
    case Domain::Reacher2Link: r = reacher_step(state_, action, task_, geometry_); break;
    case Domain::VelocityTracker: r = tracker_step(state_, action, task_); break;
  }
  ++steps_;
  // Terminal wins when both conditions coincide at the horizon.
  r.truncated = !r.terminal && steps_ >= spec_.horizon;
  state_ = r.next_state;
  return r;
}

TaskStructure parse_structure(const std::string& text) {
  if (text == "uniform") return UniformRandom{};
  const std::string prefix = "kclusters:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string rest = text.substr(prefix.size());
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("structure '" + text + "' should be kclusters:K:SPREAD");
    }
    KClusters kc;
    try {
      std::size_t used = 0;
      kc.k = std::stoi(rest.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("k");
      const std::string spread = rest.substr(colon + 1);
      kc.spread = std::stod(spread, &used);
      if (used != spread.size()) throw std::invalid_argument("spread");
    } catch (const std::exception&) {
      throw std::invalid_argument("structure '" + text + "' should be kclusters:K:SPREAD");
    }
    if (kc.k < 1 || !(kc.spread >= 0.0)) {
      throw std::invalid_argument("kclusters needs k >= 1 and spread >= 0");
    }
    return kc;
  }
  throw std::invalid_argument("unknown task structure '" + text + "'");
}

std::string to_string(const TaskStructure& s) {
  if (const auto* kc = std::get_if<KClusters>(&s)) {
    std::ostringstream os;
    os << "kclusters:" << kc->k << ":" << kc->spread;
    return os.str();
  }
  return "uniform";
}

TaskParams sample_goal(Domain d, Rng& rng, const ReacherGeometry& g) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  TaskParams t{d, {}};
  switch (d) {
    case Domain::Navigation2D:
      t.goal = {u01(rng), u01(rng)};
      break;
    case Domain::Reacher2Link: {
      // Uniform over the reachable annulus by area.
      const double r_in = std::abs(g.link1 - g.link2);
      const double r_out = g.link1 + g.link2;
      const double u = u01(rng);
      const double r = std::sqrt(r_in * r_in + u * (r_out * r_out - r_in * r_in));
      const double phi = 2.0 * std::numbers::pi * u01(rng);
      t.goal = {r * std::cos(phi), r * std::sin(phi)};
      break;
    }
    case Domain::VelocityTracker:
      t.goal = {u01(rng)};
      break;
  }
  return t;
}

namespace {

TaskParams perturb(const TaskParams& center, double spread, Rng& rng,
                   const ReacherGeometry& g) {
  std::uniform_real_distribution<double> noise(-spread, spread);
  TaskParams t = center;
  for (double& x : t.goal) x += spread > 0.0 ? noise(rng) : 0.0;
  switch (t.domain) {
    case Domain::Navigation2D:
    case Domain::VelocityTracker:
      for (double& x : t.goal) x = clip(x, 0.0, 1.0);
      break;
    case Domain::Reacher2Link: {
      const double r = norm(t.goal);
      const double r_in = std::abs(g.link1 - g.link2);
      const double r_out = g.link1 + g.link2;
      const double target = clip(r, r_in, r_out);
      if (r > 0.0 && target != r) {
        for (double& x : t.goal) x *= target / r;
      } else if (r == 0.0 && r_in > 0.0) {
        t.goal = {r_in, 0.0};
      }
      break;
    }
  }
  return t;
}

}  // namespace

TaskSequence sample_task_sequence(Domain d, int count, std::uint64_t seed,
                                  const TaskStructure& structure,
                                  const ReacherGeometry& geometry) {
  if (count < 1) throw std::invalid_argument("task count must be >= 1");
  TaskSequence seq;
  seq.domain = d;
  seq.seed = seed;
  Rng rng = make_rng(seed, Stream::TaskSampler);

  if (std::holds_alternative<UniformRandom>(structure)) {
    for (int i = 0; i < count; ++i) seq.tasks.push_back(sample_goal(d, rng, geometry));
    return seq;
  }

  const auto& kc = std::get<KClusters>(structure);
  if (kc.k < 1 || !(kc.spread >= 0.0)) {
    throw InfeasibleStructure("kclusters needs k >= 1 and spread >= 0");
  }
  const double separation = 4.0 * kc.spread;
  constexpr int kAttempts = 10000;
  std::vector<TaskParams> centers;
  for (int c = 0; c < kc.k; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      TaskParams cand = sample_goal(d, rng, geometry);
      placed = std::all_of(centers.begin(), centers.end(), [&](const TaskParams& o) {
        return distance(cand.goal, o.goal) >= separation;
      });
      if (placed) centers.push_back(std::move(cand));
    }
    if (!placed) {
      std::ostringstream os;
      os << "cannot place " << kc.k << " cluster centers with separation "
         << separation << " in the " << to_string(d) << " goal set";
      throw InfeasibleStructure(os.str());
    }
  }
  std::uniform_int_distribution<int> pick(0, kc.k - 1);
  for (int i = 0; i < count; ++i) {
    const int c = pick(rng);
    seq.tasks.push_back(perturb(centers[static_cast<std::size_t>(c)], kc.spread, rng, geometry));
    seq.center_of.push_back(c);
  }
  return seq;
}

std::string task_sequence_to_json(const TaskSequence& seq) {
  nlohmann::json j;
  j["domain"] = to_string(seq.domain);
  j["seed"] = seq.seed;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : seq.tasks) tasks.push_back(t.goal);
  j["tasks"] = std::move(tasks);
  if (!seq.center_of.empty()) j["centers"] = seq.center_of;
  return j.dump(2) + "\n";
}

TaskSequence task_sequence_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TaskSequence seq;
  seq.domain = domain_from_string(j.at("domain").get<std::string>());
  seq.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& g : j.at("tasks")) {
    TaskParams t{seq.domain, g.get<std::vector<double>>()};
    if (!goal_is_valid(t)) {
      throw std::invalid_argument("task " + std::to_string(seq.tasks.size()) +
                                  " has an invalid goal for " + to_string(seq.domain));
    }
    seq.tasks.push_back(std::move(t));
  }
  if (seq.tasks.empty()) throw std::invalid_argument("task sequence is empty");
  if (j.contains("centers")) seq.center_of = j.at("centers").get<std::vector<int>>();
  return seq;
}

void save_task_sequence(const TaskSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << task_sequence_to_json(seq);
}

TaskSequence load_task_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return task_sequence_from_json(ss.str());
}

}  // namespace dprl::envs
