#pragma once

#include <cstddef>
#include <functional>

namespace mfcast {

/// Runs body(0..n-1) on up to `jobs` threads. Results must be written to
/// per-index slots so the outcome does not depend on scheduling. The first
/// exception thrown by any worker is rethrown after all of them finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace mfcast
