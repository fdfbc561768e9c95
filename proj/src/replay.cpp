#include "dprl/replay.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace dprl::ddpg {

ReplayBuffer::ReplayBuffer(std::size_t capacity, ReplayMode mode, std::uint64_t seed)
    : capacity_(capacity), mode_(mode), rng_(seed) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  ++seen_;
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
    return;
  }
  if (mode_ == ReplayMode::Fifo) {
    storage_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
    return;
  }
  std::uniform_int_distribution<std::uint64_t> slot(0, seen_ - 1);
  const std::uint64_t j = slot(rng_);
  if (j < capacity_) storage_[static_cast<std::size_t>(j)] = std::move(t);
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= storage_.size()) {
    throw std::out_of_range("replay index " + std::to_string(i) + " out of range");
  }
  if (mode_ == ReplayMode::Fifo && storage_.size() == capacity_) {
    return storage_[(head_ + i) % capacity_];
  }
  return storage_[i];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (storage_.empty()) throw std::runtime_error("cannot sample from an empty replay buffer");
  if (n == 0) throw std::invalid_argument("sample size must be >= 1");
  const std::size_t size = storage_.size();
  std::vector<std::size_t> out;
  out.reserve(n);
  if (n > size) {
    std::uniform_int_distribution<std::size_t> pick(0, size - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pick(rng));
    return out;
  }
  if (4 * n >= size) {
    // Partial Fisher-Yates.
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, size - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
  }
  // Sparse draw: rejection against the (short) list already taken.
  std::uniform_int_distribution<std::size_t> pick(0, size - 1);
  while (out.size() < n) {
    const std::size_t c = pick(rng);
    bool dup = false;
    for (std::size_t x : out) dup = dup || x == c;
    if (!dup) out.push_back(c);
  }
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<Transition> batch;
  batch.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) batch.push_back(at(i));
  return batch;
}

void ReplayBuffer::clear() {
  storage_.clear();
  head_ = 0;
  seen_ = 0;
}

}  // namespace dprl::ddpg
