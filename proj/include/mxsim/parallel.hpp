// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace mxsim {

// Worker count used by parallel_for. Defaults to MXSIM_THREADS, else 1.
int num_threads();
void set_num_threads(int n);

// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
// results are then independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mxsim
