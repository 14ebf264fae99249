#include "boed/rl/replay.hpp"

#include <algorithm>
#include <unordered_set>

#include "boed/errors.hpp"

namespace boed::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(ReplayEntry e) {
  std::lock_guard lock(mu_);
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(e));
  ++pushed_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::size_t ReplayBuffer::pushed() const {
  std::lock_guard lock(mu_);
  return pushed_;
}

// Floyd's algorithm, then sorted so the batch order does not depend on hash layout.
std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::size_t k, dist::Rng& rng) {
  if (k > n) throw ContractViolation("cannot sample more entries than the buffer holds");
  std::unordered_set<std::size_t> chosen;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j)));
    const std::size_t pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ReplayEntry> ReplayBuffer::sample(std::size_t k, dist::Rng& rng) const {
  std::lock_guard lock(mu_);
  const auto idx = sample_indices(items_.size(), k, rng);
  std::vector<ReplayEntry> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(items_[i]);
  return out;
}

}  // namespace boed::rl
