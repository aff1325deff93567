#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace repmart {

// Global worker count for batch loops. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

namespace detail {
inline int& thread_count_ref() {
    static int n = 0;
    return n;
}
inline bool& in_worker_ref() {
    thread_local bool flag = false;
    return flag;
}
} // namespace detail

// Runs body(begin, end) over a partition of [0, n). Bodies must write to
// disjoint slots; reductions happen serially afterwards so results do not
// depend on the thread count. Nested calls from worker threads run serially.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    int workers = thread_count();
    if (workers <= 1 || n < 2 || detail::in_worker_ref()) {
        if (n > 0) body(0, n);
        return;
    }
    std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::size_t step = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    for (std::size_t lo = 0; lo < n; lo += step) {
        std::size_t hi = std::min(n, lo + step);
        pool.emplace_back([&body, lo, hi] {
            detail::in_worker_ref() = true;
            body(lo, hi);
        });
    }
    for (auto& t : pool) t.join();
}

inline void set_thread_count(int n) { detail::thread_count_ref() = n; }

inline int thread_count() {
    int n = detail::thread_count_ref();
    if (n > 0) return n;
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

} // namespace repmart
