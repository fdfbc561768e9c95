#include "dprl/dpmm.hpp"

#include "dprl/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace dprl::dpmm {
namespace {

using ddpg::Agent;
using ddpg::Batch;

constexpr double kMassSlack = 1e-9;

Agent fresh_clone(const Agent& prior) {
  Agent a = prior;
  a.reset_optimizers();
  return a;
}

double max_abs_change(const nnet::ParamVector& before, const nnet::ParamVector& after) {
  double m = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    m = std::max(m, std::abs(after[i] - before[i]));
  }
  return m;
}

void check_mixture_params(double xi, double sigma) {
  if (!(xi > 0.0) || !std::isfinite(xi)) {
    throw std::invalid_argument("concentration xi must be positive and finite");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("likelihood scale sigma must be positive and finite");
  }
}

}  // namespace

std::size_t Responsibilities::argmax() const {
  if (values.empty()) throw std::logic_error("argmax of empty responsibilities");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

MixtureState make_mixture(Agent prior, double xi, double sigma, bool found_first) {
  check_mixture_params(xi, sigma);
  MixtureState m;
  m.xi = xi;
  m.sigma = sigma;
  m.prior = std::move(prior);
  if (found_first) m.components.push_back({fresh_clone(m.prior), 0.0, 1});
  return m;
}

std::vector<double> crp_prior(const MixtureState& mixture) {
  const double denom = static_cast<double>(mixture.t - 1) + mixture.xi;
  std::vector<double> p;
  p.reserve(mixture.size() + 1);
  for (const auto& c : mixture.components) p.push_back(c.mass / denom);
  p.push_back(mixture.xi / denom);
  return p;
}

std::vector<double> assignment_prior(const MixtureState& mixture, bool include_candidate) {
  std::vector<double> w;
  w.reserve(mixture.size() + 1);
  for (const auto& c : mixture.components) {
    w.push_back(c.mass + (c.created_at == mixture.t ? mixture.xi : 0.0));
  }
  if (include_candidate) w.push_back(mixture.xi);
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw std::domain_error("every assignment prior weight is zero");
  for (double& x : w) x /= total;
  return w;
}

double log_predictive_likelihood(const Agent& agent, const Batch& batch, double sigma) {
  if (batch.size() == 0) throw std::invalid_argument("log likelihood of an empty batch");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const Eigen::VectorXd y = agent.bellman_targets(batch, ddpg::TargetSource::OnlineNetworks);
  const Eigen::VectorXd q = agent.q_values(batch);
  const double log_norm = std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = y(i) - q(i);
    if (!std::isfinite(r)) {
      throw nnet::NonFiniteError("Bellman residual of sample " + std::to_string(i) +
                                 " is not finite");
    }
    total += -log_norm - r * r * inv_two_var;
  }
  return total;
}

Responsibilities normalize_log_posterior(std::vector<double> log_likes,
                                         std::span<const double> prior) {
  if (log_likes.size() != prior.size() || log_likes.empty()) {
    throw std::invalid_argument("log likelihoods and prior differ in length");
  }
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> logp(log_likes.size());
  double top = neg_inf;
  for (std::size_t l = 0; l < logp.size(); ++l) {
    if (prior[l] < 0.0) throw std::invalid_argument("negative prior weight");
    logp[l] = prior[l] > 0.0 ? log_likes[l] + std::log(prior[l]) : neg_inf;
    top = std::max(top, logp[l]);
  }
  if (top == neg_inf) throw std::domain_error("every assignment prior weight is zero");
  double sum = 0.0;
  Responsibilities r;
  r.values.resize(logp.size());
  for (std::size_t l = 0; l < logp.size(); ++l) {
    r.values[l] = std::exp(logp[l] - top);
    sum += r.values[l];
  }
  for (double& v : r.values) v /= sum;
  r.log_likes = std::move(log_likes);
  return r;
}

Responsibilities posterior(const MixtureState& mixture, const Batch& batch,
                           bool include_candidate) {
  if (mixture.components.empty() && !include_candidate) {
    throw std::logic_error("posterior over an empty mixture");
  }
  std::vector<double> ll;
  ll.reserve(mixture.size() + 1);
  for (const auto& c : mixture.components) {
    ll.push_back(log_predictive_likelihood(c.agent, batch, mixture.sigma));
  }
  if (include_candidate) {
    ll.push_back(log_predictive_likelihood(mixture.prior, batch, mixture.sigma));
  }
  const auto prior = assignment_prior(mixture, include_candidate);
  auto r = normalize_log_posterior(std::move(ll), prior);
  r.has_candidate = include_candidate;
  return r;
}

bool maybe_spawn(MixtureState& mixture, const Responsibilities& resp) {
  if (!resp.has_candidate || resp.values.size() != mixture.size() + 1) {
    throw std::invalid_argument("spawn decision needs responsibilities with the candidate");
  }
  const double cand = resp.values.back();
  for (std::size_t l = 0; l < mixture.size(); ++l) {
    if (!(cand > resp.values[l])) return false;
  }
  mixture.components.push_back({fresh_clone(mixture.prior), 0.0, mixture.t});
  return true;
}

Responsibilities em_step(MixtureState& mixture, const Batch& batch, double skip_below) {
  auto r = posterior(mixture, batch, false);
  for (std::size_t l = 0; l < mixture.size(); ++l) {
    if (r.values[l] < skip_below) continue;
    mixture.components[l].agent.train_step(batch, r.values[l]);
  }
  return r;
}

EmResult run_em(MixtureState& mixture, const Batch& batch, double epsilon, int max_iters) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("EM threshold must be positive");
  if (max_iters < 1) throw std::invalid_argument("EM needs at least one iteration");
  if (mixture.components.empty()) throw std::logic_error("posterior over an empty mixture");
  EmResult out;
  const std::size_t n = mixture.size();
  const auto prior = assignment_prior(mixture, false);
  // Same steps as repeated em_step calls. A component that skipped its update
  // is unchanged, so its likelihood on this batch is reused.
  std::vector<double> ll(n);
  std::vector<bool> stale(n, true);
  nnet::ParamVector actor, critic;
  while (out.iterations < max_iters) {
    for (std::size_t l = 0; l < n; ++l) {
      if (stale[l]) ll[l] = log_predictive_likelihood(mixture.components[l].agent, batch,
                                                      mixture.sigma);
    }
    out.resp = normalize_log_posterior(ll, prior);
    ++out.iterations;
    out.max_change = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      stale[l] = out.resp.values[l] >= kEmSkipBelow;
      if (!stale[l]) continue;
      auto& agent = mixture.components[l].agent;
      actor = agent.params().actor.params();
      critic = agent.params().critic.params();
      agent.train_step(batch, out.resp.values[l]);
      const auto& p = agent.params();
      out.max_change = std::max({out.max_change, max_abs_change(actor, p.actor.params()),
                                 max_abs_change(critic, p.critic.params())});
    }
    if (out.max_change < epsilon) break;
  }
  return out;
}

void update_masses(MixtureState& mixture, const Responsibilities& resp) {
  if (resp.has_candidate || resp.values.size() != mixture.size()) {
    throw std::invalid_argument("mass update needs responsibilities over the components only");
  }
  for (std::size_t l = 0; l < mixture.size(); ++l) {
    if (!(resp.values[l] >= 0.0)) throw std::invalid_argument("negative responsibility");
    mixture.components[l].mass += resp.values[l];
  }
  ++mixture.t;
}

std::size_t map_identify(const MixtureState& mixture, const Batch& batch) {
  if (mixture.components.empty()) throw std::logic_error("identification in an empty mixture");
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < mixture.size(); ++l) {
    const double ll = log_predictive_likelihood(mixture.components[l].agent, batch,
                                                mixture.sigma);
    if (ll > best_ll) {
      best_ll = ll;
      best = l;
    }
  }
  return best;
}

namespace {

constexpr const char* kRoles[] = {"actor", "critic", "actor_target", "critic_target"};

std::vector<std::string> network_files(std::size_t components) {
  std::vector<std::string> files;
  for (const char* role : kRoles) files.push_back(std::string("prior_") + role + ".bin");
  for (std::size_t l = 1; l <= components; ++l) {
    for (const char* role : kRoles) {
      files.push_back("component_" + std::to_string(l) + "_" + role + ".bin");
    }
  }
  return files;
}

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

}  // namespace

void save_mixture(const MixtureState& mixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["xi"] = mixture.xi;
  j["sigma"] = mixture.sigma;
  j["t"] = mixture.t;
  j["masses"] = nlohmann::json::array();
  j["created_at"] = nlohmann::json::array();
  for (std::size_t l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.components[l];
    j["masses"].push_back(c.mass);
    j["created_at"].push_back(c.created_at);
    ddpg::save_networks(c.agent.params(), dir, "component_" + std::to_string(l + 1));
  }
  ddpg::save_networks(mixture.prior.params(), dir, "prior");
  // Digests of every network file, so a flipped parameter byte cannot load
  // silently; the .bin files themselves keep the plain checkpoint layout.
  j["checksums"] = nlohmann::json::object();
  for (const auto& f : network_files(mixture.size())) {
    j["checksums"][f] = hex64(nnet::fnv1a64(nnet::read_file_bytes(dir / f)));
  }
  std::ofstream out(dir / "mixture.json");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + (dir / "mixture.json").string());
}

MixtureState load_mixture(const std::filesystem::path& dir, const ddpg::AgentConfig& config) {
  const auto path = dir / "mixture.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  MixtureState m;
  std::vector<double> masses;
  std::vector<int> created;
  try {
    m.xi = j.at("xi").get<double>();
    m.sigma = j.at("sigma").get<double>();
    m.t = j.at("t").get<int>();
    masses = j.at("masses").get<std::vector<double>>();
    created = j.at("created_at").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  check_mixture_params(m.xi, m.sigma);
  if (m.t < 1) throw std::runtime_error(path.string() + ": period t must be >= 1");
  if (masses.size() != created.size()) {
    throw std::runtime_error(path.string() + ": masses and created_at differ in length");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < masses.size(); ++l) {
    if (!(masses[l] >= 0.0) || !std::isfinite(masses[l])) {
      throw std::runtime_error(path.string() + ": mass of component " +
                               std::to_string(l + 1) + " is invalid");
    }
    if (created[l] < 1 || created[l] > m.t) {
      throw std::runtime_error(path.string() + ": created_at of component " +
                               std::to_string(l + 1) + " is outside [1, t]");
    }
    total += masses[l];
  }
  if (total > static_cast<double>(m.t - 1) + kMassSlack) {
    std::ostringstream os;
    os << path.string() << ": masses sum to " << total << ", more than t-1 = " << m.t - 1;
    throw std::runtime_error(os.str());
  }
  auto prior_params = ddpg::load_networks(dir, "prior");
  m.prior = Agent(config, std::move(prior_params));
  m.prior.reset_optimizers();
  for (std::size_t l = 0; l < masses.size(); ++l) {
    Agent a(config, ddpg::load_networks(dir, "component_" + std::to_string(l + 1)));
    a.reset_optimizers();
    m.components.push_back({std::move(a), masses[l], created[l]});
  }
  // Structural errors above are more specific, so digests are checked last.
  if (j.contains("checksums")) {
    const auto& sums = j.at("checksums");
    for (const auto& f : network_files(masses.size())) {
      if (!sums.is_object() || !sums.contains(f) || !sums.at(f).is_string()) {
        throw std::runtime_error(path.string() + ": no checksum for " + f);
      }
      const auto actual = hex64(nnet::fnv1a64(nnet::read_file_bytes(dir / f)));
      if (actual != sums.at(f).get<std::string>()) {
        throw std::runtime_error((dir / f).string() + ": checksum mismatch, expected " +
                                 sums.at(f).get<std::string>() + ", file has " + actual);
      }
    }
  }
  return m;
}

}  // namespace dprl::dpmm
