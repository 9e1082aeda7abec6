#pragma once

#include <cstddef>
#include <functional>

namespace implab {

// Runs fn(0..count-1) on up to `jobs` threads. Work units must write to
// disjoint outputs; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace implab
