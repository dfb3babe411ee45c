// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace screenlab {

// Worker cap: min(hardware, SCREENLAB_THREADS) when the env var is set.
std::size_t thread_budget();

// Runs fn(i) for i in [0, n). Each index is independent; results must be
// written to per-index slots so the outcome is identical for any thread
// count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace screenlab
