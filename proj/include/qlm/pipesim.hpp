#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include "qlm/types.hpp"

namespace qlm {

/// Parameters of the GQMV accelerator timing model.
struct HwConfig {
  Index simd_lanes = 16;   // INT8 elements consumed per cycle
  Index gs = 256;
  double clock_hz = 205e6;
  double ddr_bytes_per_cycle = std::numeric_limits<double>::infinity();
  Index stream_depth = 2;  // FIFO capacity between stages, in rows
  Index stage_latency = 4; // fixed pipeline latency of each stage

  void check() const;
};

enum class Stage : int { preprocess = 0, dot_product, accumulate };
inline constexpr int kStages = 3;

struct SimReport {
  std::uint64_t total_cycles = 0;
  // Dot-product stage view of the run; these four add up to total_cycles.
  std::uint64_t fill_cycles = 0;   // before the first row enters the dot stage
  std::uint64_t busy_cycles = 0;   // dot stage computing
  std::uint64_t stall_cycles = 0;  // dot stage waiting on the weight stream
  std::uint64_t drain_cycles = 0;  // after the dot stage finishes the last row
  std::uint64_t prefetch_cycles = 0;
  std::uint64_t steady_row_cycles = 0;
  std::array<std::uint64_t, kStages> stage_busy{};
  std::uint64_t ops = 0;  // 2·m·n
  double sustained_gops = 0;
  double peak_gops = 0;
};

/// 2 · lanes · clock / 1e9: one multiply and one add per lane per cycle.
double peak_gops(const HwConfig& hw);

/// Row-level simulation of the three dataflow stages for an (m, n) product:
/// x is prefetched first, then rows stream through pre-processing (bounded by
/// lanes and DDR supply of weights plus weight scales), dot product (one lane
/// vector per cycle, adder-tree depth as latency) and accumulate (one group
/// sum per cycle), linked by FIFOs of `stream_depth` rows.
SimReport simulate_gqmv(Index m, Index n, const HwConfig& hw);

struct Calibration {
  double ddr_bytes_per_cycle = 0;
  SimReport report;
};

/// Finds the DDR supply rate at which simulate_gqmv reproduces
/// `target_gops` within 1%. Throws Errc::infeasible when no rate does.
Calibration calibrate_ddr(double target_gops, Index m, Index n, HwConfig hw);

}  // namespace qlm
