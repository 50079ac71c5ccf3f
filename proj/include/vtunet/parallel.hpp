#pragma once

#include <cstddef>
#include <functional>

namespace vtunet {

/// Worker count for data-parallel kernels. Read once from VTUNET_THREADS
/// (default 1); `set_num_threads` overrides it.
std::size_t num_threads();
void set_num_threads(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Kernels must
/// give every index the same arithmetic regardless of chunking, so results
/// do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 16);

}  // namespace vtunet
