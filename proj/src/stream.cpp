#include "qlm/stream.hpp"

#include <algorithm>
#include <string>

#include "qlm/error.hpp"

namespace qlm {

Timeline plan_schedule(const ScheduleCosts& costs, ScheduleMode mode) {
  const std::size_t layers = costs.compute.size();
  if (layers == 0) throw Error(Errc::invalid_input, "schedule needs at least one layer");
  if (costs.transfer.size() != layers) throw Error(Errc::invalid_input, "compute and transfer lengths differ");
  for (std::size_t l = 0; l < layers; ++l) {
    if (!(costs.compute[l] >= 0) || !(costs.transfer[l] >= 0)) {
      throw Error(Errc::invalid_input, "negative cost at layer " + std::to_string(l));
    }
  }

  Timeline t;
  t.transfer.resize(layers);
  t.compute.resize(layers);
  if (mode == ScheduleMode::sync) {
    double now = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      t.transfer[l] = {now, now + costs.transfer[l]};
      now = t.transfer[l].end;
      t.compute[l] = {now, now + costs.compute[l]};
      now = t.compute[l].end;
    }
    t.total = now;
    return t;
  }

  t.transfer[0] = {0, costs.transfer[0]};
  double start = costs.transfer[0];
  for (std::size_t l = 0; l < layers; ++l) {
    t.compute[l] = {start, start + costs.compute[l]};
    if (l + 1 < layers) {
      // The prefetch of l+1 is issued when layer l is acquired.
      t.transfer[l + 1] = {start, start + costs.transfer[l + 1]};
      start += std::max(costs.compute[l], costs.transfer[l + 1]);
    }
  }
  t.total = t.compute.back().end;
  return t;
}

const char* to_string(SlotState s) {
  switch (s) {
    case SlotState::empty: return "empty";
    case SlotState::loading: return "loading";
    case SlotState::ready: return "ready";
    case SlotState::in_use: return "in-use";
  }
  return "?";
}

LayerStreamer::LayerStreamer(const ModelFile& file, StreamOptions options)
    : file_(file), options_(options), started_(std::chrono::steady_clock::now()),
      serial_reads_(std::thread::hardware_concurrency() <= 1),
      in_(file.path, std::ios::binary) {
  if (!in_) throw Error(Errc::io, "cannot open " + file.path.string());
  thread_ = std::jthread([this] { loader(); });
  std::unique_lock lock(mu_);
  request_load(0, 0);
  changed_.wait(lock, [&] { return slots_[0].state != SlotState::loading; });
}

LayerStreamer::~LayerStreamer() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  changed_.notify_all();
}

void LayerStreamer::request_load(int slot, Index layer) {
  Slot& s = slots_[static_cast<std::size_t>(slot)];
  if (s.state == SlotState::in_use || s.state == SlotState::loading) {
    throw Error(Errc::state, "slot " + std::to_string(slot) + " is " + to_string(s.state) + ", cannot load layer " +
                                 std::to_string(layer));
  }
  s.state = SlotState::loading;
  s.layer = layer;
  s.error = nullptr;
  s.read_done = false;
  s.requested = std::chrono::steady_clock::now();
  requests_.push_back(slot);
  changed_.notify_all();
}

int LayerStreamer::find_slot(Index layer) const {
  for (int i = 0; i < 2; ++i) {
    const Slot& s = slots_[static_cast<std::size_t>(i)];
    if (s.layer == layer && s.state != SlotState::empty) return i;
  }
  return -1;
}

void LayerStreamer::loader() {
  for (;;) {
    int slot = 0;
    Index layer = 0;
    {
      std::unique_lock lock(mu_);
      changed_.wait(lock, [&] { return stop_ || !requests_.empty(); });
      if (stop_) return;
      slot = requests_.front();
      requests_.pop_front();
      layer = slots_[static_cast<std::size_t>(slot)].layer;
    }
    // The slot is in state loading, so compute never touches its weights.
    Slot& s = slots_[static_cast<std::size_t>(slot)];
    std::exception_ptr error;
    try {
      if (!s.allocated) {
        s.weights = LayerWeights::allocate(file_.config);
        s.allocated = true;
      }
      file_.load_layer(layer, in_, s.weights);
      // Injected latency runs after the read against a fixed deadline: it
      // needs no CPU, so it overlaps compute even if this thread wakes late.
      const auto due = std::chrono::steady_clock::now() + options_.inject_transfer;
      {
        std::lock_guard lock(mu_);
        s.read_done = true;
      }
      changed_.notify_all();
      std::this_thread::sleep_until(due);
    } catch (...) {
      error = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      s.load_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s.requested).count();
      s.consumed = false;
      s.error = error;
      s.state = SlotState::ready;
    }
    changed_.notify_all();
  }
}

const LayerWeights& LayerStreamer::acquire(Index layer) {
  const Index n_layers = file_.config.n_layers;
  if (layer < 0 || layer >= n_layers) throw Error(Errc::invalid_input, "layer " + std::to_string(layer));
  const auto called = std::chrono::steady_clock::now();
  std::unique_lock lock(mu_);
  int slot = find_slot(layer);
  if (slot < 0) {
    // Not prefetched: take an empty slot, else evict one that is not busy.
    for (int i = 0; i < 2 && slot < 0; ++i) {
      if (slots_[static_cast<std::size_t>(i)].state == SlotState::empty) slot = i;
    }
    for (int i = 0; i < 2 && slot < 0; ++i) {
      if (slots_[static_cast<std::size_t>(i)].state == SlotState::ready) slot = i;
    }
    if (slot < 0) throw Error(Errc::state, "no free slot for layer " + std::to_string(layer));
    request_load(slot, layer);
  }
  Slot& s = slots_[static_cast<std::size_t>(slot)];
  changed_.wait(lock, [&] { return s.state != SlotState::loading; });
  if (s.error) {
    const auto error = s.error;
    s.error = nullptr;
    s.state = SlotState::empty;
    s.layer = -1;
    std::rethrow_exception(error);
  }
  if (s.state != SlotState::ready) {
    throw Error(Errc::state, "layer " + std::to_string(layer) + " slot is " + to_string(s.state));
  }
  s.state = SlotState::in_use;
  // Issuing the prefetch below counts toward this layer's compute.
  const auto returned = std::chrono::steady_clock::now();
  // A slot reused without reloading cost no transfer for this acquisition.
  const double load_seconds = s.consumed ? 0.0 : s.load_seconds;
  s.consumed = true;

  if (options_.async) {
    const Index next = (layer + 1) % n_layers;
    const int other = 1 - slot;
    if (next != layer && find_slot(next) < 0) {
      request_load(other, next);
      // With one hardware thread the read cannot overlap compute anyway; do
      // it now so that only the transfer latency runs in the background.
      if (serial_reads_) {
        const Slot& o = slots_[static_cast<std::size_t>(other)];
        changed_.wait(lock, [&] { return stop_ || o.read_done || o.state != SlotState::loading; });
      }
    }
  }
  trace_.push_back({layer, called, returned, load_seconds});
  return s.weights;
}

void LayerStreamer::release(Index layer) {
  std::lock_guard lock(mu_);
  const int slot = find_slot(layer);
  if (slot < 0 || slots_[static_cast<std::size_t>(slot)].state != SlotState::in_use) {
    throw Error(Errc::state, "release of layer " + std::to_string(layer) + " that is not in use");
  }
  slots_[static_cast<std::size_t>(slot)].state = SlotState::ready;
}

std::size_t LayerStreamer::resident_weight_bytes() const {
  std::lock_guard lock(mu_);
  std::size_t total = file_.persistent.bytes();
  for (const Slot& s : slots_) {
    if (s.state != SlotState::empty) total += file_.config.layer_bytes();
  }
  return total;
}

SlotState LayerStreamer::slot_state(int slot) const {
  std::lock_guard lock(mu_);
  return slots_.at(static_cast<std::size_t>(slot)).state;
}

Index LayerStreamer::slot_layer(int slot) const {
  std::lock_guard lock(mu_);
  return slots_.at(static_cast<std::size_t>(slot)).layer;
}

std::vector<AcquireRecord> LayerStreamer::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

ScheduleCosts costs_from_trace(const std::vector<AcquireRecord>& trace, std::chrono::steady_clock::time_point end) {
  ScheduleCosts c;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto stop = i + 1 < trace.size() ? trace[i + 1].called : end;
    c.compute.push_back(std::chrono::duration<double>(stop - trace[i].returned).count());
    c.transfer.push_back(trace[i].load_seconds);
  }
  return c;
}

}  // namespace qlm
