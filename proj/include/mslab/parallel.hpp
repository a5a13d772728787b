#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace mslab {

/// Number of worker threads used by parallel_chunks. Defaults to the
/// hardware concurrency; results never depend on this value.
unsigned worker_count();
void set_worker_count(unsigned n);

/// Splits [0, n) into a fixed number of contiguous chunks that depends only
/// on n and runs body(chunk_index, begin, end) for each. Chunk boundaries are
/// independent of the thread count, so reductions combined in chunk order are
/// bit-reproducible.
void parallel_chunks(std::size_t n, std::size_t chunk_count,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Sum of f(i) for i in [0, n), reduced in fixed chunk order.
template <typename F>
double deterministic_sum(std::size_t n, F&& f, std::size_t chunk_count = 64) {
  chunk_count = std::max<std::size_t>(1, std::min(chunk_count, n));
  std::vector<double> partial(chunk_count, 0.0);
  parallel_chunks(n, chunk_count, [&](std::size_t c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += f(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace mslab
