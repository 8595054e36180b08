#pragma once

#include <cstddef>
#include <functional>

namespace bcg {

// Worker count from BCG_THREADS (0 or 1 = sequential). Unset means the
// hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index must write only its own outputs;
// results are then identical to a sequential loop regardless of thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace bcg
