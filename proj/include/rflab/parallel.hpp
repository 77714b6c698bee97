#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace rflab {

/// Runs fn(begin, end) over a static partition of [0, count). Partitioning
/// depends only on (count, workers), so per-item results never depend on
/// scheduling. With workers <= 1 everything runs on the calling thread.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  if (count == 0) return;
  const std::size_t parts = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (parts == 1) {
    fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(parts);
  std::vector<std::thread> threads;
  threads.reserve(parts - 1);
  const std::size_t chunk = (count + parts - 1) / parts;
  auto run = [&](std::size_t part) {
    const std::size_t begin = part * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    try {
      if (begin < end) fn(begin, end);
    } catch (...) {
      errors[part] = std::current_exception();
    }
  };
  for (std::size_t part = 1; part < parts; ++part) threads.emplace_back(run, part);
  run(0);
  for (auto& t : threads) t.join();
  // Lowest partition wins so the reported error is reproducible.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rflab
