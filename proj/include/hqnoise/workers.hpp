#pragma once
// Deterministic fan-out helper: runs fn(0..n-1) on up to `workers` threads.
// Each index is an independent unit of work writing only to its own slot, so
// results are bitwise identical no matter how indices land on threads.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace hqnoise {

inline void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (workers == 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto run = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int count = workers > static_cast<int>(n) ? static_cast<int>(n) : workers;
  pool.reserve(static_cast<size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(run);
  for (std::thread& t : pool) t.join();
}

// Worker count resolution: explicit flag > environment variable > default 1.
inline int resolve_workers(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("HQNOISE_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError(std::string("HQNOISE_WORKERS must be a positive integer, got '") +
                        env + "'");
    return static_cast<int>(v);
  }
  return 1;
}

}  // namespace hqnoise
