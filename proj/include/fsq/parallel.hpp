#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace fsq {

// Worker count used when callers pass 0: FSQ_WORKERS if set, otherwise the
// hardware concurrency.
std::size_t default_workers();

// Evaluates fn(i) for i in [0, count) on up to `workers` threads. Results are
// stored by index, so the output never depends on scheduling. The exception
// of the lowest failing index is rethrown.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, Fn&& fn, std::size_t workers = 0) {
  if (workers == 0) workers = default_workers();
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace fsq
