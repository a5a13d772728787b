#include "mslab/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>

namespace mslab {

namespace {
std::atomic<unsigned> g_workers{0};
}

unsigned worker_count() {
  const unsigned n = g_workers.load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_count(unsigned n) { g_workers.store(n); }

void parallel_chunks(std::size_t n, std::size_t chunk_count,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  chunk_count = std::max<std::size_t>(1, std::min(chunk_count, n));
  auto bounds = [&](std::size_t c) { return c * n / chunk_count; };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_count(), chunk_count));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunk_count; ++c) body(c, bounds(c), bounds(c + 1));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunk_count) return;
      try {
        body(c, bounds(c), bounds(c + 1));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace mslab
