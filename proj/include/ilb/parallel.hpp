#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace ilb {

/// Worker count used by the data-parallel loops (0 = hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n) on contiguous blocks. fn must only write to
/// slots owned by i, so results do not depend on the thread count.
template <class F>
void parallel_for(std::size_t n, F&& fn)
{
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i)
                fn(i);
        });
    }
    for (auto& t : pool)
        t.join();
}

} // namespace ilb
