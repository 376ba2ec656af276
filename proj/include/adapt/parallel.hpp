#pragma once

// Index-partitioned parallel loop. Every index writes only its own output slot,
// so results do not depend on the thread count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace adapt::parallel {

namespace detail {
inline std::atomic<int>& override_threads() {
    static std::atomic<int> value{-1};
    return value;
}
} // namespace detail

/// Resolved worker count: explicit override, else ADAPT_THREADS (0 = auto), else hardware concurrency.
inline int thread_count() {
    int n = detail::override_threads().load();
    if (n < 0) {
        n = 0;
        if (const char* env = std::getenv("ADAPT_THREADS")) n = std::max(0, std::atoi(env));
    }
    if (n == 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return n;
}

/// Overrides ADAPT_THREADS for this process; -1 restores the environment default.
inline void set_thread_count(int n) { detail::override_threads().store(n); }

template <typename Fn>
void for_each_index(std::ptrdiff_t n, Fn&& fn) {
    const int workers = static_cast<int>(std::min<std::ptrdiff_t>(thread_count(), std::max<std::ptrdiff_t>(n, 1)));
    if (workers <= 1 || n < 64) {
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::ptrdiff_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::ptrdiff_t begin = w * chunk;
        const std::ptrdiff_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace adapt::parallel
