#include "qlm/pipesim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include "qlm/error.hpp"

namespace qlm {

void HwConfig::check() const {
  if (simd_lanes < 1 || gs < 1 || stream_depth < 1 || stage_latency < 0) {
    throw Error(Errc::invalid_input, "hardware parameters must be positive");
  }
  if (!(clock_hz > 0) || !(ddr_bytes_per_cycle > 0)) throw Error(Errc::invalid_input, "clock and DDR rate must be > 0");
  if (!std::has_single_bit(static_cast<std::uint64_t>(gs))) throw Error(Errc::invalid_input, "gs must be a power of two");
  if (gs % simd_lanes != 0) throw Error(Errc::invalid_input, "simd_lanes must divide gs");
}

double peak_gops(const HwConfig& hw) { return 2.0 * static_cast<double>(hw.simd_lanes) * hw.clock_hz / 1e9; }

namespace {

std::uint64_t ceil_div(double bytes, double rate) {
  if (std::isinf(rate)) return 0;
  return static_cast<std::uint64_t>(std::ceil(bytes / rate));
}

}  // namespace

SimReport simulate_gqmv(Index m, Index n, const HwConfig& hw) {
  hw.check();
  if (m < 1 || n < 1 || n % hw.gs != 0) {
    throw Error(Errc::invalid_shape, "m=" + std::to_string(m) + " n=" + std::to_string(n) +
                                         " (n must be a positive multiple of gs=" + std::to_string(hw.gs) + ")");
  }
  const auto lanes = static_cast<std::uint64_t>(hw.simd_lanes);
  const auto groups = static_cast<std::uint64_t>(n / hw.gs);
  const auto cols = static_cast<std::uint64_t>(n);
  const auto lat = static_cast<std::uint64_t>(hw.stage_latency);
  const auto tree_depth = static_cast<std::uint64_t>(std::countr_zero(static_cast<std::uint64_t>(hw.gs)));
  const double supply = std::min(static_cast<double>(lanes), hw.ddr_bytes_per_cycle);
  const double row_bytes = static_cast<double>(cols + 4 * groups);

  SimReport r;
  r.prefetch_cycles = ceil_div(static_cast<double>(cols + 4 * groups), supply);
  const std::array<std::uint64_t, kStages> service{
      std::max(cols / lanes, ceil_div(row_bytes, hw.ddr_bytes_per_cycle)),  // weight + scale stream
      cols / lanes,                                                         // one lane vector per cycle
      groups,                                                               // one group sum per cycle
  };
  const std::array<std::uint64_t, kStages> latency{lat, lat + tree_depth, lat};
  const auto depth = static_cast<std::size_t>(hw.stream_depth);
  const auto rows = static_cast<std::size_t>(m);

  std::array<std::vector<std::uint64_t>, kStages> start, finish;
  for (auto& v : start) v.assign(rows, 0);
  for (auto& v : finish) v.assign(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < kStages; ++k) {
      std::uint64_t s = k == 0 ? r.prefetch_cycles : start[k - 1][i] + latency[k - 1];
      if (i > 0) s = std::max(s, finish[k][i - 1]);
      // Output FIFO must have room: downstream has taken row i - depth.
      if (k + 1 < kStages && i >= depth) s = std::max(s, start[k + 1][i - depth]);
      std::uint64_t f = s + service[k];
      if (k > 0) f = std::max(f, finish[k - 1][i] + latency[k - 1]);
      start[k][i] = s;
      finish[k][i] = f;
    }
  }

  const auto dot = static_cast<std::size_t>(Stage::dot_product);
  r.total_cycles = finish[kStages - 1][rows - 1] + latency[kStages - 1];
  r.fill_cycles = start[dot][0];
  r.busy_cycles = static_cast<std::uint64_t>(m) * service[dot];
  r.stall_cycles = finish[dot][rows - 1] - start[dot][0] - r.busy_cycles;
  r.drain_cycles = r.total_cycles - finish[dot][rows - 1];
  r.steady_row_cycles = *std::max_element(service.begin(), service.end());
  for (std::size_t k = 0; k < kStages; ++k) r.stage_busy[k] = static_cast<std::uint64_t>(m) * service[k];
  r.stage_busy[0] += r.prefetch_cycles;
  r.ops = 2ull * static_cast<std::uint64_t>(m) * cols;
  r.peak_gops = peak_gops(hw);
  r.sustained_gops = static_cast<double>(r.ops) / (static_cast<double>(r.total_cycles) / hw.clock_hz) / 1e9;
  return r;
}

namespace {

// Smallest DDR rate in (lo, hi] whose sustained GOPS reaches `gops`;
// sustained GOPS is a non-decreasing step function of the rate.
double min_rate_reaching(double gops, double lo, double hi, Index m, Index n, HwConfig hw) {
  for (int it = 0; it < 200 && hi - lo > hi * 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    hw.ddr_bytes_per_cycle = mid;
    if (simulate_gqmv(m, n, hw).sustained_gops >= gops) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

Calibration calibrate_ddr(double target_gops, Index m, Index n, HwConfig hw) {
  hw.check();
  const double peak = peak_gops(hw);
  if (!(target_gops > 0) || target_gops > peak) {
    throw Error(Errc::infeasible, "target " + std::to_string(target_gops) + " GOPS outside (0, peak " +
                                      std::to_string(peak) + "]");
  }
  constexpr double kTolerance = 0.01;
  auto simulate_at = [&](double rate) {
    HwConfig h = hw;
    h.ddr_bytes_per_cycle = rate;
    return simulate_gqmv(m, n, h);
  };

  // Above this rate the lanes, not DDR, bound the weight stream.
  const double groups = static_cast<double>(n / hw.gs);
  const double saturating = static_cast<double>(hw.simd_lanes) * (1.0 + 4.0 * groups / static_cast<double>(n));
  const SimReport best = simulate_at(saturating);
  if (best.sustained_gops < target_gops * (1.0 - kTolerance)) {
    throw Error(Errc::infeasible, "target " + std::to_string(target_gops) + " GOPS unreachable; shape tops out at " +
                                      std::to_string(best.sustained_gops));
  }
  if (best.sustained_gops <= target_gops) return {saturating, best};

  const double floor = saturating * 1e-9;
  const double above = min_rate_reaching(target_gops, floor, saturating, m, n, hw);
  Calibration cal{above, simulate_at(above)};
  // The step just below may land closer to the target.
  const SimReport below_report = simulate_at(above * (1.0 - 1e-9));
  if (std::fabs(below_report.sustained_gops - target_gops) < std::fabs(cal.report.sustained_gops - target_gops)) {
    const double below = min_rate_reaching(below_report.sustained_gops, floor, above, m, n, hw);
    cal = {below, simulate_at(below)};
  }
  if (std::fabs(cal.report.sustained_gops - target_gops) > kTolerance * target_gops) {
    throw Error(Errc::infeasible, "no DDR rate within 1% of " + std::to_string(target_gops) + " GOPS");
  }
  return cal;
}

}  // namespace qlm
