#pragma once

#include <cstddef>
#include <functional>

namespace graphtok3d {

// Worker count: hardware concurrency, capped by GRAPHTOK3D_THREADS when set.
std::size_t worker_count();

// Runs body(i) for i in [0, count). Each index is visited exactly once; the
// caller must make iterations independent.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace graphtok3d
