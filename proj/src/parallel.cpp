#include "dualprop/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dualprop {
namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("DUALPROP_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::atomic<int>& threads() {
  static std::atomic<int> n{initial_thread_count()};
  return n;
}

// Set while a thread runs a chunk; nested loops then run inline.
thread_local bool in_worker = false;

}  // namespace

int thread_count() { return threads().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
  threads().store(std::max(1, n), std::memory_order_relaxed);
}

void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end,
                  const std::function<void(std::ptrdiff_t)>& body) {
  const std::ptrdiff_t n = end - begin;
  if (n <= 0) return;
  const std::ptrdiff_t workers = std::min<std::ptrdiff_t>(thread_count(), n);
  if (workers <= 1 || in_worker) {
    for (std::ptrdiff_t i = begin; i < end; ++i) body(i);
    return;
  }

  std::exception_ptr error;
  std::mutex error_mutex;
  auto run_chunk = [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
    in_worker = true;
    try {
      for (std::ptrdiff_t i = lo; i < hi; ++i) body(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
    in_worker = false;
  };

  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (std::ptrdiff_t w = 1; w < workers; ++w) {
    const std::ptrdiff_t lo = begin + w * chunk;
    const std::ptrdiff_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run_chunk, lo, hi);
  }
  run_chunk(begin, std::min(end, begin + chunk));
  pool.clear();  // joins
  if (error) std::rethrow_exception(error);
}

}  // namespace dualprop
