#pragma once

#include <cstddef>
#include <functional>

namespace boed::est {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
// executed exactly once; callers write results by index, so the outcome does
// not depend on scheduling. Exceptions are rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace boed::est
