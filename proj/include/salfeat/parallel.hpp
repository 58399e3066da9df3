#pragma once

#include <cstddef>
#include <functional>

namespace salfeat {

// Runs fn(i) for every i in [0, n) on up to `jobs` worker threads. Work is
// handed out by index; the first exception thrown is rethrown after all
// workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace salfeat
