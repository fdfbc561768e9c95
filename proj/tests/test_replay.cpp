#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "dprl/replay.hpp"

using namespace dprl;
using ddpg::ReplayBuffer;
using ddpg::ReplayMode;
using ddpg::Transition;

namespace {

Transition tagged(int k) {
  Transition t;
  t.state = {static_cast<double>(k)};
  t.action = {0.0};
  t.next_state = {static_cast<double>(k + 1)};
  t.reward = -k;
  return t;
}

int tag(const Transition& t) { return static_cast<int>(t.state[0]); }

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("FIFO below capacity keeps everything in order") {
  ReplayBuffer buf(10);
  for (int k = 0; k < 5; ++k) buf.push(tagged(k));
  REQUIRE(buf.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(tag(buf.at(k)) == k);
}

TEST_CASE("FIFO evicts the oldest item") {
  ReplayBuffer buf(4);
  for (int k = 0; k < 11; ++k) buf.push(tagged(k));
  REQUIRE(buf.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(tag(buf.at(i)) == 7 + i);
  CHECK(buf.seen_count() == 11);
  CHECK_THROWS_AS(buf.at(4), std::out_of_range);
  buf.clear();
  CHECK(buf.empty());
}

TEST_CASE("sampling the whole buffer yields a permutation") {
  ReplayBuffer buf(32);
  for (int k = 0; k < 20; ++k) buf.push(tagged(k));
  Rng rng(3);
  const auto batch = buf.sample(20, rng);
  std::set<int> seen;
  for (const auto& t : batch) seen.insert(tag(t));
  CHECK(seen.size() == 20);
}

TEST_CASE("sampling is without replacement up to the size, with replacement beyond") {
  ReplayBuffer buf(1000);
  for (int k = 0; k < 1000; ++k) buf.push(tagged(k));
  Rng rng(8);
  for (std::size_t n : {1u, 10u, 64u, 300u, 1000u}) {
    const auto idx = buf.sample_indices(n, rng);
    CHECK(idx.size() == n);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == n);
  }
  ReplayBuffer small(8);
  for (int k = 0; k < 3; ++k) small.push(tagged(k));
  const auto many = small.sample(50, rng);
  CHECK(many.size() == 50);
  for (const auto& t : many) CHECK(tag(t) < 3);
}

TEST_CASE("sampling is uniform over slots") {
  ReplayBuffer buf(50);
  for (int k = 0; k < 50; ++k) buf.push(tagged(k));
  Rng rng(12);
  std::vector<int> counts(50, 0);
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    for (const auto& t : buf.sample(5, rng)) ++counts[tag(t)];
  }
  // Each slot is hit with probability 5/50 per draw.
  const double mean = draws * 0.1;
  const double se = std::sqrt(draws * 0.1 * 0.9);
  for (int c : counts) CHECK(std::abs(c - mean) < 5 * se);
}

TEST_CASE("empty buffer and zero sizes are errors") {
  ReplayBuffer buf(4);
  Rng rng(0);
  CHECK_THROWS_AS(buf.sample(1, rng), std::runtime_error);
  buf.push(tagged(0));
  CHECK_THROWS_AS(buf.sample(0, rng), std::invalid_argument);
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("reservoir keeps a uniform sample of the stream") {
  const int capacity = 10, stream = 1000, trials = 10000;
  std::vector<int> kept(stream, 0);
  for (int trial = 0; trial < trials; ++trial) {
    ReplayBuffer buf(capacity, ReplayMode::Reservoir, 1000 + trial);
    for (int k = 0; k < stream; ++k) buf.push(tagged(k));
    REQUIRE(buf.size() == static_cast<std::size_t>(capacity));
    for (std::size_t i = 0; i < buf.size(); ++i) ++kept[tag(buf.at(i))];
  }
  const double p = static_cast<double>(capacity) / stream;
  const double se = std::sqrt(p * (1 - p) / trials);
  int beyond3 = 0;
  double chi2 = 0.0;
  for (int c : kept) {
    const double f = static_cast<double>(c) / trials;
    beyond3 += std::abs(f - p) > 3 * se;
    // Bonferroni bound for 1000 simultaneous comparisons.
    CHECK(std::abs(f - p) < 4.5 * se);
    chi2 += (f - p) * (f - p) / (se * se);
  }
  // About 0.27% of items fall outside 3 SE by chance.
  CHECK(beyond3 <= 10);
  // chi-square with 999 dof: mean 999, sd about 45.
  CHECK(chi2 < 999 + 5 * 45);
  CHECK(chi2 > 999 - 5 * 45);
}

TEST_CASE("reservoir fills in order before it starts replacing") {
  ReplayBuffer buf(5, ReplayMode::Reservoir, 4);
  for (int k = 0; k < 5; ++k) buf.push(tagged(k));
  for (int i = 0; i < 5; ++i) CHECK(tag(buf.at(i)) == i);
  for (int k = 5; k < 100; ++k) buf.push(tagged(k));
  CHECK(buf.size() == 5);
  CHECK(buf.seen_count() == 100);
}

}  // TEST_SUITE
