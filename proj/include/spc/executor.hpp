#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spc {

// Index-parallel loop. Work items write results by index, so outputs never
// depend on scheduling. A loop started from inside another loop's worker runs
// inline, which bounds the thread count by the outermost loop.
class Executor {
 public:
  explicit Executor(std::size_t workers = default_workers()) : workers_(std::max<std::size_t>(1, workers)) {}

  static std::size_t default_workers() {
    auto n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
  }

  std::size_t workers() const { return workers_; }

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) const {
    if (n == 0) return;
    if (workers_ == 1 || n == 1 || in_worker()) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto body = [&] {
      in_worker() = true;
      for (;;) {
        auto i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
      in_worker() = false;
    };
    std::vector<std::thread> threads;
    auto count = std::min(workers_, n);
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

 private:
  static bool& in_worker() {
    thread_local bool flag = false;
    return flag;
  }

  std::size_t workers_;
};

}  // namespace spc
