#ifndef QUANTMERGE_THREADING_HPP
#define QUANTMERGE_THREADING_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quantmerge {

/// Runs fn(0..n_jobs-1), optionally across threads. Results must be written
/// to per-job slots so the outcome is identical for any worker count.
template <typename Fn>
void parallel_for(std::size_t n_jobs, int n_threads, Fn&& fn) {
    if (n_threads <= 1 || n_jobs <= 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_jobs || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_jobs);
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace quantmerge

#endif  // QUANTMERGE_THREADING_HPP
