#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dprl/rng.hpp"

namespace dprl::ddpg {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

enum class ReplayMode { Fifo, Reservoir };

// Bounded transition store. FIFO evicts the oldest item once full. Reservoir
// keeps a uniform sample of everything pushed so far (Algorithm R): item k
// (1-indexed) overwrites a uniformly random slot with probability capacity/k.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, ReplayMode mode = ReplayMode::Fifo,
                        std::uint64_t seed = 0);

  void push(Transition t);

  // Uniform without replacement when n <= size(), with replacement otherwise.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  // Logical order: oldest first for FIFO, slot order for reservoir.
  const Transition& at(std::size_t i) const;

  std::size_t size() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t seen_count() const { return seen_; }
  ReplayMode mode() const { return mode_; }
  void clear();

 private:
  std::size_t capacity_;
  ReplayMode mode_;
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // FIFO: index of the oldest item once full
  std::uint64_t seen_ = 0;
  Rng rng_;
};

}  // namespace dprl::ddpg
