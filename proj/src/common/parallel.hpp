#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fare {

/// Worker count: FARE_THREADS if set and positive, otherwise hardware concurrency.
inline std::size_t thread_count() {
  if (const char* env = std::getenv("FARE_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(task, worker) for task in [0, n_tasks). Tasks are handed out in
/// index order; callers must make results independent of which worker ran a task.
inline void parallel_for(std::size_t n_tasks, std::size_t n_workers,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  n_workers = std::max<std::size_t>(1, std::min(n_workers, n_tasks));
  if (n_workers == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) fn(t, 0);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        std::size_t task;
        {
          std::lock_guard lock(mu);
          if (next >= n_tasks || first_error) return;
          task = next++;
        }
        try {
          fn(task, w);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fare
