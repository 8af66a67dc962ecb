#pragma once

#include <cstddef>
#include <functional>

namespace graftcert {

// Number of worker threads: hardware concurrency, capped by GRAFTCERT_THREADS.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
// write results into per-index slots so the outcome is order independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace graftcert
