#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace boed::env {

// Ordered (design, outcome) pairs, stored flat.
class History {
 public:
  History() = default;
  History(std::size_t design_dim, std::size_t outcome_dim)
      : design_dim_(design_dim), outcome_dim_(outcome_dim) {}

  std::size_t size() const noexcept { return design_dim_ ? designs_.size() / design_dim_ : 0; }
  bool empty() const noexcept { return designs_.empty(); }
  std::size_t design_dim() const noexcept { return design_dim_; }
  std::size_t outcome_dim() const noexcept { return outcome_dim_; }

  void push(std::span<const double> design, std::span<const double> outcome);
  void pop();
  void clear() noexcept {
    designs_.clear();
    outcomes_.clear();
  }

  std::span<const double> design(std::size_t t) const {
    return {designs_.data() + t * design_dim_, design_dim_};
  }
  std::span<const double> outcome(std::size_t t) const {
    return {outcomes_.data() + t * outcome_dim_, outcome_dim_};
  }
  const std::vector<double>& designs() const noexcept { return designs_; }
  const std::vector<double>& outcomes() const noexcept { return outcomes_; }

  // First t steps.
  History prefix(std::size_t t) const;

 private:
  std::size_t design_dim_ = 0;
  std::size_t outcome_dim_ = 0;
  std::vector<double> designs_;
  std::vector<double> outcomes_;
};

}  // namespace boed::env
