#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sk {

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// The chunk decomposition depends only on n and chunk_size, never on the
// worker count, so callers can reduce per-chunk results in chunk order and
// get outputs that are bit-identical for any n_threads.
template <class Fn>
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, int n_threads, Fn&& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;

  auto run_chunk = [&](std::size_t c) {
    std::size_t b = c * chunk_size;
    std::size_t e = std::min(n, b + chunk_size);
    fn(c, b, e);
  };

  if (n_threads <= 1 || n_chunks == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      try {
        run_chunk(c);
      } catch (...) {
        if (!failed.exchange(true)) err = std::current_exception();
        return;
      }
    }
  };

  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_chunks);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline int default_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(std::min(hw, 4u));
}

}  // namespace sk
