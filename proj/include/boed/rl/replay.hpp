#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/env/history.hpp"

namespace boed::rl {

// One complete episode. Rewards depending on the posterior are not stored;
// they are recomputed from the raw history whenever the entry is sampled.
struct ReplayEntry {
  std::vector<double> theta;
  env::History history;
  // T x action width, row-major (normalised continuous actions or indices).
  std::vector<double> actions;
  // Per-step rewards that do not depend on learned parameters (sPCE mode); empty otherwise.
  std::vector<double> fixed_rewards;
};

// FIFO buffer of episodes. push may be called from several collector threads;
// sampling takes the same lock.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(ReplayEntry e);
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  // k distinct entries chosen uniformly (copies, so the buffer may keep changing).
  std::vector<ReplayEntry> sample(std::size_t k, dist::Rng& rng) const;
  // Indices used by sample(); exposed for tests.
  static std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, dist::Rng& rng);
  std::size_t pushed() const;

 private:
  std::size_t capacity_;
  std::size_t pushed_ = 0;
  std::deque<ReplayEntry> items_;
  mutable std::mutex mu_;
};

}  // namespace boed::rl
