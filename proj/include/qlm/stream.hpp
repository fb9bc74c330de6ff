#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "qlm/model.hpp"
#include "qlm/modelio.hpp"

namespace qlm {

// ---------------------------------------------------------------------------
// Schedule model

/// Per-layer compute and transfer durations, in any consistent unit.
struct ScheduleCosts {
  std::vector<double> compute;
  std::vector<double> transfer;
};

struct Interval {
  double start = 0;
  double end = 0;
};

struct Timeline {
  std::vector<Interval> transfer;
  std::vector<Interval> compute;
  double total = 0;
};

enum class ScheduleMode { sync, async };

/// Sync: each layer's transfer then its compute, strictly serial.
/// Async: layer l+1 transfers while layer l computes (two buffers), so
/// total = t_t[0] + Σ_l max(t_c[l], t_t[l+1]) with t_t[L] = 0.
Timeline plan_schedule(const ScheduleCosts& costs, ScheduleMode mode);

// ---------------------------------------------------------------------------
// Double-buffered layer streaming

enum class SlotState { empty, loading, ready, in_use };
const char* to_string(SlotState s);

struct StreamOptions {
  bool async = true;
  /// Artificial delay added to every layer transfer.
  std::chrono::microseconds inject_transfer{0};
};

/// One acquire() as seen by the compute side, with the duration of the load
/// that filled the slot it returned.
struct AcquireRecord {
  Index layer = 0;
  std::chrono::steady_clock::time_point called;
  std::chrono::steady_clock::time_point returned;
  double load_seconds = 0;
};

/// Streams layer weights from a model file through two slots. Layer 0 is
/// loaded on construction; in async mode acquiring layer l starts loading
/// layer (l+1) mod n_layers into the other slot.
class LayerStreamer final : public LayerSource {
 public:
  LayerStreamer(const ModelFile& file, StreamOptions options = {});
  ~LayerStreamer() override;

  LayerStreamer(const LayerStreamer&) = delete;
  LayerStreamer& operator=(const LayerStreamer&) = delete;

  const LayerWeights& acquire(Index layer) override;
  void release(Index layer) override;

  /// Persistent tensors plus every slot that is not empty.
  std::size_t resident_weight_bytes() const;

  SlotState slot_state(int slot) const;
  Index slot_layer(int slot) const;
  std::vector<AcquireRecord> trace() const;
  std::chrono::steady_clock::time_point started() const { return started_; }

 private:
  struct Slot {
    SlotState state = SlotState::empty;
    Index layer = -1;
    LayerWeights weights;
    bool allocated = false;
    std::chrono::steady_clock::time_point requested;
    double load_seconds = 0;  // request to ready, including loader wake-up
    bool consumed = false;
    bool read_done = false;
    std::exception_ptr error;
  };

  void loader();
  void request_load(int slot, Index layer);  // requires mu_ held
  int find_slot(Index layer) const;          // requires mu_ held

  const ModelFile& file_;
  StreamOptions options_;
  std::chrono::steady_clock::time_point started_;
  bool serial_reads_ = false;
  std::ifstream in_;

  mutable std::mutex mu_;
  std::condition_variable changed_;
  std::array<Slot, 2> slots_;
  std::deque<int> requests_;
  std::vector<AcquireRecord> trace_;
  bool stop_ = false;
  std::jthread thread_;
};

/// Per-acquisition costs of a live run, in seconds: compute i spans from
/// acquire i returning to acquire i+1 being called (the last one ends at
/// `end`); transfer i is the load that served acquisition i.
ScheduleCosts costs_from_trace(const std::vector<AcquireRecord>& trace, std::chrono::steady_clock::time_point end);

}  // namespace qlm
