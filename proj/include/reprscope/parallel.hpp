#pragma once

#include <cstddef>
#include <functional>

namespace reprscope {

// Worker cap: REPRSCOPE_THREADS if set, else hardware concurrency. Tests may
// override it; results never depend on the value.
std::size_t worker_count();
void set_worker_count(std::size_t workers);

// Runs body(i) for i in [0, n). Each index is executed by exactly one worker,
// so any per-index output written by body is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace reprscope
