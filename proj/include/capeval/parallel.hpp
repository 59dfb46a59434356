#ifndef CAPEVAL_PARALLEL_HPP
#define CAPEVAL_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace capeval {

/// std::thread::hardware_concurrency(), at least 1.
unsigned default_jobs();

/// Runs body(i) for i in [0, n) on up to `jobs` threads using contiguous static
/// chunks. If any call throws, the exception from the smallest index is
/// rethrown after all workers join, so failures are reported deterministically.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& body);

}  // namespace capeval

#endif  // CAPEVAL_PARALLEL_HPP
