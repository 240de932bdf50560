#include "tagnn/tensor.hpp"

#include <atomic>

namespace tagnn {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) {
  if (n < 1) raise(ErrorKind::config, "thread count must be at least 1, got " + std::to_string(n));
  g_threads.store(n, std::memory_order_relaxed);
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

}  // namespace tagnn
