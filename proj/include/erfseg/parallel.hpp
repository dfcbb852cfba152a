#pragma once

#include <cstddef>
#include <functional>

namespace erfseg {

/// Worker count used by parallel_for. 1 (the default) runs inline.
void set_num_threads(int n);
int num_threads();

/// Splits [0, n) into contiguous chunks, one per worker. Callers must only
/// write disjoint outputs per index so results never depend on the split.
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& fn);

}  // namespace erfseg
