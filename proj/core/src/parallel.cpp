#include "mpslam/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mpslam {

int thread_count() {
  if (const char* env = std::getenv("MPC_SLAM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  int t = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (t <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(t);
  std::size_t chunk = (n + t - 1) / t;
  for (int i = 0; i < t; ++i) {
    std::size_t b = static_cast<std::size_t>(i) * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    workers.emplace_back(fn, b, e);
  }
  for (auto& w : workers) w.join();
}

}  // namespace mpslam
