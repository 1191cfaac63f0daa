#pragma once

#include <cstddef>
#include <functional>

namespace gformula {

// 0 means "use the hardware count".
unsigned resolve_threads(unsigned requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each work item must
// write only to its own output slot; results are then identical for any
// thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace gformula
