#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pmtp {

// Input/schema problems (bad CSV, unknown column, invalid policy spec).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures (singular solve, root-find breakdown).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One engine per (seed, tag) substream. Streams are independent of each
// other, so adding a consumer never perturbs the draws of another.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t subtag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(subtag), static_cast<std::uint32_t>(subtag >> 32)};
  return std::mt19937_64(seq);
}

inline unsigned default_thread_count() {
  if (const char* env = std::getenv("PMTP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, count). Results must be written to per-index slots
// by the caller; scheduling is block-cyclic and deterministic.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                         unsigned n_threads = 0) {
  if (n_threads == 0) n_threads = default_thread_count();
  n_threads = std::min<std::size_t>(n_threads, count == 0 ? 1 : count);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (unsigned t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < count; i += n_threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pmtp
