// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace matmvp {

// Global worker-count knob (CLI --workers). Every parallel_for splits its
// range into this many fixed contiguous chunks; each output element is
// computed entirely inside one worker, so results are bitwise deterministic
// for a fixed worker count.
int num_workers();
void set_num_workers(int n);

// fn(begin, end) over disjoint subranges of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

// Convenience: fn(i) per index.
inline void parallel_for_each(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_for(n, [&](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace matmvp
