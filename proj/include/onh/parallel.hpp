#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace onh {

// Runs fn(i) for i in [0, n) on up to n_threads workers with static chunking.
// Workers write to disjoint output slots chosen by index, so the result is
// identical to sequential execution for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, int n_threads, Fn&& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(std::max(n_threads, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace onh
