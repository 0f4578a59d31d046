// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/core/parallel.hpp"

#include <atomic>

namespace matmvp {

namespace {
std::atomic<int> g_workers{0};  // 0 = not set yet, resolve lazily
}

int num_workers() {
    int n = g_workers.load(std::memory_order_relaxed);
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        g_workers.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_num_workers(int n) {
    g_workers.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = std::min<int64_t>(num_workers(), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) {
        const int64_t b = w * chunk;
        const int64_t e = std::min<int64_t>(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(0, std::min<int64_t>(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace matmvp
