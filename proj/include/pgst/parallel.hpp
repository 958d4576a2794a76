#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pgst {

/// Number of worker threads. PGST_THREADS caps it; otherwise the hardware
/// concurrency is used.
inline int worker_count() {
    int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char *env = std::getenv("PGST_THREADS")) {
        try {
            int requested = std::stoi(env);
            if (requested >= 1) return requested;
        } catch (...) {
        }
    }
    return hw;
}

/// Runs fn(i) for i in [0, n). Work is handed out dynamically, so fn must
/// write only to slots owned by i; callers reduce afterwards in index order
/// to keep results independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn &&fn) {
    int threads = std::min<int>(worker_count(), static_cast<int>(n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto &th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace pgst
