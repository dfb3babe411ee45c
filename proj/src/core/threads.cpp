// SPDX-License-Identifier: Apache-2.0
#include "core/threads.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace screenlab {

std::size_t thread_budget() {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("SCREENLAB_THREADS")) {
    long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<std::size_t>(cap) < hw)
      hw = static_cast<std::size_t>(cap);
  }
  return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = thread_budget();
  if (workers <= 1 || n < 256) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  const std::size_t chunk = 64;
  auto worker = [&]() {
    for (;;) {
      std::size_t begin = cursor.fetch_add(chunk);
      if (begin >= n) return;
      std::size_t end = begin + chunk < n ? begin + chunk : n;
      for (std::size_t i = begin; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace screenlab
