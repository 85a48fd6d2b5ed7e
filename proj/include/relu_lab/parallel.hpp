#pragma once

// Chunked work distribution. Callers store per-chunk results and combine them
// in chunk order, so outcomes never depend on the number of worker threads.
// RELU_LAB_THREADS caps the pool (0 or unset = hardware concurrency).

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace relu_lab {

inline int max_threads() {
  if (const char* env = std::getenv("RELU_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Invokes fn(chunk_index, begin, end) for every chunk of [0, n).
inline void for_each_chunk(std::size_t n, std::size_t chunk_size,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers =
      static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n_chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1))
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

}  // namespace relu_lab
