#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dprl/rng.hpp"

namespace dprl::envs {

enum class Domain { Navigation2D, Reacher2Link, VelocityTracker };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& name);

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  int horizon = 100;
};

struct TaskParams {
  Domain domain = Domain::Navigation2D;
  std::vector<double> goal;

  bool operator==(const TaskParams&) const = default;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

// Reacher arm geometry and success radius. The success radius is loose
// relative to the arm length by default; 0.001 reproduces the tight setting.
struct ReacherGeometry {
  double link1 = 0.1;
  double link2 = 0.1;
  double success_radius = 0.01;
};

inline constexpr double kNavMaxStep = 0.1;
inline constexpr double kNavSuccessRadius = 0.01;
inline constexpr double kControlCost = 0.01;
inline constexpr double kReacherMaxStep = 0.2;
inline constexpr double kTrackerMaxStep = 0.2;
inline constexpr double kTrackerMinVelocity = -1.0;
inline constexpr double kTrackerMaxVelocity = 2.0;
inline constexpr double kAliveBonus = 1.0;

EnvSpec env_spec(Domain d);
std::vector<double> initial_state(Domain d);

// Pure transition functions. Actions are clipped, never rejected; the
// returned StepResult never sets `truncated` (the Environment wrapper owns the
// step counter).
StepResult nav_step(std::span<const double> state, std::span<const double> action,
                    const TaskParams& task);
StepResult reacher_step(std::span<const double> state,
                        std::span<const double> action, const TaskParams& task,
                        const ReacherGeometry& geometry = {});
StepResult tracker_step(std::span<const double> state,
                        std::span<const double> action, const TaskParams& task);

std::vector<double> reacher_fingertip(std::span<const double> angles,
                                      const ReacherGeometry& geometry = {});

// Distance from the current state to the task's success condition: goal
// distance for navigation, fingertip distance for the reacher, velocity error
// for the tracker.
double goal_distance(std::span<const double> state, const TaskParams& task,
                     const ReacherGeometry& geometry = {});

bool goal_is_valid(const TaskParams& task, const ReacherGeometry& geometry = {});

// Episode state machine around the pure step functions.
class Environment {
 public:
  explicit Environment(TaskParams task, ReacherGeometry geometry = {});

  const EnvSpec& spec() const { return spec_; }
  const TaskParams& task() const { return task_; }
  const ReacherGeometry& geometry() const { return geometry_; }
  const std::vector<double>& state() const { return state_; }
  int steps() const { return steps_; }

  const std::vector<double>& reset();
  StepResult step(std::span<const double> action);

 private:
  TaskParams task_;
  ReacherGeometry geometry_;
  EnvSpec spec_;
  std::vector<double> state_;
  int steps_ = 0;
};

struct UniformRandom {};
struct KClusters {
  int k = 4;
  double spread = 0.05;
};
using TaskStructure = std::variant<UniformRandom, KClusters>;

// "uniform" or "kclusters:K:SPREAD".
TaskStructure parse_structure(const std::string& text);
std::string to_string(const TaskStructure& s);

class InfeasibleStructure : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TaskSequence {
  Domain domain = Domain::Navigation2D;
  std::uint64_t seed = 0;
  std::vector<TaskParams> tasks;
  // Generating center of each task for KClusters, empty otherwise.
  std::vector<int> center_of;
};

TaskParams sample_goal(Domain d, Rng& rng, const ReacherGeometry& geometry = {});

TaskSequence sample_task_sequence(Domain d, int count, std::uint64_t seed,
                                  const TaskStructure& structure,
                                  const ReacherGeometry& geometry = {});

// {"domain": ..., "seed": ..., "tasks": [[g...], ...]}
std::string task_sequence_to_json(const TaskSequence& seq);
TaskSequence task_sequence_from_json(const std::string& text);
void save_task_sequence(const TaskSequence& seq, const std::filesystem::path& path);
TaskSequence load_task_sequence(const std::filesystem::path& path);

}  // namespace dprl::envs
