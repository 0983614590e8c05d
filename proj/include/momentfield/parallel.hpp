#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace momentfield {

/// Clamp a requested thread count; 0 means "use the hardware".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(hw == 0 ? 1 : (hw > 8 ? 8 : hw));
}

/// Runs body(chunk_index) for chunk_index in [0, chunks) on `threads`
/// workers pulling from a shared counter. Chunk boundaries are fixed by
/// the caller, never by the scheduler, so any reduction done per chunk
/// and combined in chunk order is independent of the thread count.
template <class Body>
void parallel_chunks(std::size_t chunks, int threads, Body&& body) {
  threads = resolve_threads(threads);
  if (threads <= 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Neumaier-compensated accumulator; used wherever a sum must be both
/// accurate over ~1e5 terms and bit-reproducible under a fixed order.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }

  double result() const { return sum + comp; }
};

}  // namespace momentfield
