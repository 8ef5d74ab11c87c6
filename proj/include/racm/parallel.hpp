#pragma once
// Deterministic chunked parallelism. Work is split into fixed-size chunks
// whose boundaries do not depend on the worker count, and workers only write
// to their own chunk's outputs, so results are bitwise identical for any
// thread count. Callers that reduce across chunks must do so in chunk order.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace racm {

inline std::size_t& max_threads_setting() {
  static std::size_t n = 0;  // 0 = use hardware concurrency
  return n;
}

inline void set_max_threads(std::size_t n) { max_threads_setting() = n; }

inline std::size_t effective_threads() {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t cap = max_threads_setting();
  return cap == 0 ? hw : std::min(cap, hw);
}

// Calls fn(chunk_index, begin, end) for each chunk of [0, n_items).
template <typename Fn>
inline void parallel_chunks(std::size_t n_items, std::size_t chunk_size,
                            Fn&& fn) {
  if (n_items == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n_items + chunk_size - 1) / chunk_size;
  const std::size_t n_threads = std::min(effective_threads(), n_chunks);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * chunk_size;
    const std::size_t end = std::min(begin + chunk_size, n_items);
    fn(c, begin, end);
  };

  if (n_threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return;
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(n_threads);
  workers.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t]() {
      try {
        for (std::size_t c = t; c < n_chunks; c += n_threads) run_chunk(c);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace racm
