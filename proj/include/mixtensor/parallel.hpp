#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mixtensor {

// Runs f(i) for i in [0, count) on up to `threads` workers. Tasks must be
// independent and write disjoint outputs, which keeps results identical for
// every thread count. The first captured exception is rethrown after join.
template <typename F>
void parallel_for(std::size_t count, int threads, F&& f) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, count);
  std::vector<std::thread> pool;
  std::mutex mu;
  std::exception_ptr err;
  std::size_t next = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= count || err) return;
          i = next++;
        }
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Default worker count: the MIXTENSOR_THREADS environment variable if set,
// else 1. A --threads flag always wins over the environment.
inline int default_thread_count() {
  if (const char* env = std::getenv("MIXTENSOR_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

}  // namespace mixtensor
