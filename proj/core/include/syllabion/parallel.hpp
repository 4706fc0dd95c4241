#pragma once

#include <cstddef>
#include <functional>

namespace syllabion {

// Calls fn(i) for every i in [0, n) on up to `workers` threads. Work items
// must write only to their own slots, so results never depend on `workers`.
// The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace syllabion
