// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstddef>
#include <functional>

namespace attnkit {

/// Worker count: ATTNKIT_THREADS if set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Callers
/// write results into per-index slots, so the outcome does not depend on
/// scheduling. If any call throws, one of the exceptions is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace attnkit
