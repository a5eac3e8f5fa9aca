#pragma once

#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace specgd::engine {

/// Runs fn(p) for p < m, inline when m == 1. The first exception thrown by
/// any worker is rethrown after all of them finish.
template <class F>
void run_workers(std::uint32_t m, F&& fn) {
  if (m <= 1) {
    fn(0u);
    return;
  }
  std::vector<std::exception_ptr> errors(m);
  {
    std::vector<std::jthread> pool;
    pool.reserve(m);
    for (std::uint32_t p = 0; p < m; ++p) {
      pool.emplace_back([&, p] {
        try {
          fn(p);
        } catch (...) {
          errors[p] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace specgd::engine
