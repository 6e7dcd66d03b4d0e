#pragma once

#include <cstddef>
#include <functional>

namespace postdae {

/// Process-wide worker count used by parallel_for. Defaults to 1.
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n), splitting the range into contiguous chunks
/// across thread_count() workers. Bodies must write disjoint outputs; any
/// reduction is left to the caller so the summation order stays fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace postdae
