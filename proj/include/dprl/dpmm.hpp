#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "dprl/ddpg.hpp"

namespace dprl::dpmm {

struct MixtureComponent {
  ddpg::Agent agent;
  double mass = 0.0;  // accumulated responsibility
  int created_at = 1;  // period in which the component was instantiated
};

struct MixtureState {
  std::vector<MixtureComponent> components;
  double xi = 1.0;
  double sigma = 1.0;
  int t = 1;  // current period, 1-based
  ddpg::Agent prior;  // template every new component is cloned from

  std::size_t size() const { return components.size(); }
};

// Soft assignment of one batch. values[l] for l < L are the existing
// components; when has_candidate, the last entry is the unspawned candidate.
struct Responsibilities {
  std::vector<double> values;
  std::vector<double> log_likes;
  bool has_candidate = false;

  std::size_t argmax() const;  // lowest index on ties
};

// An empty mixture (L = 0) whose first period founds cluster 1. With
// `found_first` the first component is created up front instead.
MixtureState make_mixture(ddpg::Agent prior, double xi, double sigma,
                          bool found_first = false);

// mass_l / (t-1+xi) for every component followed by xi / (t-1+xi).
std::vector<double> crp_prior(const MixtureState& mixture);

// Normalized prior used by posterior(). A component instantiated in the
// current period has no mass yet and is weighted by xi, the weight that
// justified creating it.
std::vector<double> assignment_prior(const MixtureState& mixture,
                                     bool include_candidate);

// Gaussian log-density of the Bellman residuals y - Q(s, a), both computed
// with the agent's online networks.
double log_predictive_likelihood(const ddpg::Agent& agent, const ddpg::Batch& batch,
                                 double sigma);

// log-sum-exp normalization of log_likes + log(prior). Entries with zero
// prior get zero responsibility.
Responsibilities normalize_log_posterior(std::vector<double> log_likes,
                                         std::span<const double> prior);

Responsibilities posterior(const MixtureState& mixture, const ddpg::Batch& batch,
                           bool include_candidate);

// Appends a fresh clone of the prior iff the candidate strictly beats every
// existing component.
bool maybe_spawn(MixtureState& mixture, const Responsibilities& resp);

inline constexpr double kEmSkipBelow = 1e-12;

// One E-step over the existing components, then one responsibility-weighted
// DDPG update per component. Components below `skip_below` are untouched.
Responsibilities em_step(MixtureState& mixture, const ddpg::Batch& batch,
                         double skip_below = kEmSkipBelow);

struct EmResult {
  Responsibilities resp;  // from the last E-step
  int iterations = 0;
  double max_change = 0.0;  // max_l ||delta theta_l||_inf in the last iteration
};

EmResult run_em(MixtureState& mixture, const ddpg::Batch& batch, double epsilon,
                int max_iters);

// mass_l += resp_l, then advances the period counter.
void update_masses(MixtureState& mixture, const Responsibilities& resp);

// Component with the highest log predictive likelihood, 0-based.
std::size_t map_identify(const MixtureState& mixture, const ddpg::Batch& batch);

// Directory with mixture.json, component_<l>_<role>.bin (l 1-based) and
// prior_<role>.bin. Optimizer moments are not stored.
void save_mixture(const MixtureState& mixture, const std::filesystem::path& dir);
MixtureState load_mixture(const std::filesystem::path& dir,
                          const ddpg::AgentConfig& config);

}  // namespace dprl::dpmm
