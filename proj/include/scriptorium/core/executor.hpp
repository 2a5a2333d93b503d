#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace scriptorium {

/// Worker-count capability handed down from the CLI. Modules never spawn threads on
/// their own; they ask the executor for a parallel loop. Results must be written to
/// pre-sized slots so reductions stay in index order.
class Executor {
 public:
  explicit Executor(std::size_t jobs = 1) : jobs_(std::max<std::size_t>(1, jobs)) {}

  std::size_t jobs() const noexcept { return jobs_; }

  template <typename Fn>
  void parallel_for(std::size_t n, Fn&& fn) const {
    const std::size_t workers = std::min(jobs_, n);
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto body = [&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next.store(n);
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers - 1);
      for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
      body();
    }
    if (failure) std::rethrow_exception(failure);
  }

  static const Executor& serial() {
    static const Executor instance{1};
    return instance;
  }

 private:
  std::size_t jobs_;
};

}  // namespace scriptorium
