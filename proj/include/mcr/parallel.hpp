// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mcr {

/// Runs f(i) for every i in [0, n) on up to `threads` workers. Each call
/// must touch only its own output slot; the results are then combined by
/// the caller in index order, so the outcome is independent of scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const int workers = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Thread count resolution: 0 means "auto", capped by the task width.
inline int resolve_threads(int configured, std::size_t task_width) {
  if (configured > 0)
    return static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(configured), task_width));
  const unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(
      std::min<std::size_t>(hc == 0 ? 1 : hc, task_width));
}

}  // namespace mcr
