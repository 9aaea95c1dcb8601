#ifndef SURVCLUST_PARALLEL_HPP_
#define SURVCLUST_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace survclust {

/// Number of worker threads; 0 means one per hardware thread.
struct Parallelism {
  std::size_t threads = 1;

  std::size_t resolved() const {
    if (threads > 0) return threads;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }

  /// Reads SURVCLUST_THREADS; unset or unparsable falls back to 0 (auto).
  static Parallelism from_env() {
    Parallelism p{0};
    if (const char *env = std::getenv("SURVCLUST_THREADS")) {
      try {
        p.threads = static_cast<std::size_t>(std::stoul(env));
      } catch (const std::exception &) {
        p.threads = 0;
      }
    }
    return p;
  }
};

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the outcome is schedule-independent.
template <typename Fn>
void parallel_for(std::size_t n, Parallelism par, Fn &&fn) {
  const std::size_t workers = std::min(par.resolved(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace survclust

#endif  // SURVCLUST_PARALLEL_HPP_
