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

#include "adamsep/errors.hpp"

namespace adamsep {

/// Worker count from ADAMSEP_WORKERS, else 1.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("ADAMSEP_WORKERS")) {
    try {
      const long k = std::stol(env);
      if (k >= 1) return static_cast<std::size_t>(k);
    } catch (const std::exception&) {
    }
    throw ConfigError("ADAMSEP_WORKERS must be a positive integer");
  }
  return 1;
}

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
///
/// Work is handed out by index, so any result written to slot i is independent
/// of scheduling. The first exception thrown by fn is rethrown after all
/// threads join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace adamsep
