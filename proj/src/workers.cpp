#include "qlm/workers.hpp"

#include <algorithm>

namespace qlm {

namespace {

std::pair<Index, Index> chunk(Index n, int parts, int id) {
  const Index base = n / parts;
  const Index extra = n % parts;
  const Index begin = id * base + std::min<Index>(id, extra);
  return {begin, begin + base + (id < extra ? 1 : 0)};
}

}  // namespace

Workers::Workers(int count) : count_(std::max(1, count)) {
  // Worker 0 is the calling thread.
  for (int id = 1; id < count_; ++id) threads_.emplace_back([this, id] { run(id); });
}

Workers::~Workers() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
}

void Workers::run(int id) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(Index, Index)>* job = nullptr;
    Index n = 0;
    {
      std::unique_lock lock(mu_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = job_n_;
    }
    const auto [begin, end] = chunk(n, count_, id);
    if (begin < end) (*job)(begin, end);
    {
      std::lock_guard lock(mu_);
      if (--pending_ == 0) done_.notify_one();
    }
  }
}

void Workers::parallel_for(Index n, const std::function<void(Index, Index)>& fn) {
  if (n <= 0) return;
  if (count_ == 1) {
    fn(0, n);
    return;
  }
  {
    std::lock_guard lock(mu_);
    job_ = &fn;
    job_n_ = n;
    pending_ = count_ - 1;
    ++generation_;
  }
  wake_.notify_all();
  const auto [begin, end] = chunk(n, count_, 0);
  if (begin < end) fn(begin, end);
  std::unique_lock lock(mu_);
  done_.wait(lock, [&] { return pending_ == 0; });
}

}  // namespace qlm
