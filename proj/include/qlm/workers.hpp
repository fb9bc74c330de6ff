#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "qlm/types.hpp"

namespace qlm {

/// Fixed-size pool for splitting an index range into contiguous chunks.
/// Chunk boundaries depend only on the range and worker count and each chunk
/// writes a disjoint slice, so results do not depend on scheduling.
class Workers {
 public:
  explicit Workers(int count = 1);
  ~Workers();

  Workers(const Workers&) = delete;
  Workers& operator=(const Workers&) = delete;

  int size() const { return count_; }

  /// Calls fn(begin, end) over a partition of [0, n) and blocks until done.
  void parallel_for(Index n, const std::function<void(Index, Index)>& fn);

 private:
  void run(int id);

  int count_;
  std::vector<std::jthread> threads_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(Index, Index)>* job_ = nullptr;
  Index job_n_ = 0;
  std::size_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

}  // namespace qlm
