// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace ape {

/// Worker count used by the dense kernels. 1 (the default) is the strict
/// deterministic mode. Kernels split work only along axes that do not change
/// any reduction order, so results are identical for every thread count.
void set_num_threads(std::size_t n);
std::size_t num_threads() noexcept;

/// Runs fn(begin, end) over disjoint chunks of [0, n). Falls back to a single
/// inline call when n < grain or only one thread is configured.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ape
