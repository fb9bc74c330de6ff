#include <cmath>
#include <random>

#include "doctest.h"
#include "qlm/error.hpp"
#include "qlm/pipesim.hpp"

using namespace qlm;

namespace {

void check_report(const SimReport& r, Index m, Index n) {
  CHECK(r.ops == 2ull * static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n));
  CHECK(r.sustained_gops <= r.peak_gops);
  CHECK(r.stall_cycles <= r.total_cycles);
  CHECK(r.fill_cycles + r.busy_cycles + r.stall_cycles + r.drain_cycles == r.total_cycles);
}

}  // namespace

TEST_CASE("peak GOPS") {
  HwConfig hw;
  CHECK(peak_gops(hw) == doctest::Approx(6.56).epsilon(1e-12));
  HwConfig unit;
  unit.simd_lanes = 1;
  unit.gs = 1;
  unit.clock_hz = 1;
  CHECK(peak_gops(unit) == doctest::Approx(2e-9));
  HwConfig wide = hw;
  wide.simd_lanes = 32;
  CHECK(peak_gops(wide) == doctest::Approx(2 * peak_gops(hw)));
}

TEST_CASE("unlimited bandwidth reaches the roofline") {
  HwConfig hw;
  const auto r = simulate_gqmv(2048, 2048, hw);
  check_report(r, 2048, 2048);
  CHECK(r.steady_row_cycles == 128);
  CHECK(r.stall_cycles == 0);
  CHECK(r.sustained_gops >= 0.98 * 6.56);
  CHECK(r.busy_cycles == 2048 * 128);
  // The dot stage trails pre-processing by its fixed latency.
  CHECK(r.fill_cycles == r.prefetch_cycles + 4);
  CHECK(r.drain_cycles == 4 + 8 + 4);
  CHECK(r.prefetch_cycles == (2048 + 32) / 16);
}

TEST_CASE("DDR-limited stream") {
  HwConfig hw;
  hw.ddr_bytes_per_cycle = 8;
  const auto r = simulate_gqmv(2048, 2048, hw);
  check_report(r, 2048, 2048);
  // 2048 weight bytes plus 8 four-byte scales per row at 8 bytes/cycle.
  CHECK(r.steady_row_cycles == 260);
  CHECK(r.stall_cycles > 0);
  CHECK(r.sustained_gops == doctest::Approx(6.56 * 128.0 / 260.0).epsilon(0.01));
  CHECK(r.sustained_gops == doctest::Approx(3.28).epsilon(0.02));
}

TEST_CASE("single row is fill dominated") {
  HwConfig hw;
  const auto r = simulate_gqmv(1, 256, hw);
  check_report(r, 1, 256);
  CHECK(r.sustained_gops < 0.5 * r.peak_gops);
}

TEST_CASE("invalid shapes and hardware") {
  HwConfig hw;
  try {
    simulate_gqmv(4, 300, hw);
    FAIL("bad n accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_shape);
  }
  CHECK_THROWS_AS(simulate_gqmv(0, 256, hw), Error);
  HwConfig bad = hw;
  bad.gs = 96;
  CHECK_THROWS_AS(simulate_gqmv(4, 96 * 4, bad), Error);
  bad = hw;
  bad.simd_lanes = 512;
  CHECK_THROWS_AS(simulate_gqmv(4, 256, bad), Error);
}

TEST_CASE("monotone in bandwidth and clock") {
  HwConfig hw;
  double prev = 0;
  for (int i = 0; i < 40; ++i) {
    hw.ddr_bytes_per_cycle = 0.5 + i * 0.5;
    const auto r = simulate_gqmv(512, 2048, hw);
    check_report(r, 512, 2048);
    CHECK(r.sustained_gops >= prev);
    prev = r.sustained_gops;
  }
  hw.ddr_bytes_per_cycle = 10;
  prev = 0;
  for (double mhz : {50.0, 100.0, 205.0, 300.0}) {
    hw.clock_hz = mhz * 1e6;
    const double g = simulate_gqmv(256, 2048, hw).sustained_gops;
    CHECK(g >= prev);
    prev = g;
  }
}

TEST_CASE("amortization over rows") {
  for (double ddr : {std::numeric_limits<double>::infinity(), 11.0, 4.0}) {
    HwConfig hw;
    hw.ddr_bytes_per_cycle = ddr;
    double prev = 0;
    for (Index m : {1, 2, 8, 64, 256, 1000, 4000}) {
      const auto r = simulate_gqmv(m, 2048, hw);
      CHECK(r.sustained_gops >= prev);
      prev = r.sustained_gops;
      if (m >= 1000) {
        const double roof = r.peak_gops * static_cast<double>(2048 / hw.simd_lanes) /
                            static_cast<double>(r.steady_row_cycles);
        CHECK(r.sustained_gops >= 0.98 * roof);
      }
    }
  }
}

TEST_CASE("work conservation on random configs") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) {
    HwConfig hw;
    hw.gs = Index{1} << (4 + rng() % 5);
    hw.simd_lanes = Index{1} << (rng() % 5);
    hw.stream_depth = 1 + static_cast<Index>(rng() % 4);
    hw.stage_latency = static_cast<Index>(rng() % 9);
    hw.ddr_bytes_per_cycle = (rng() % 3 == 0) ? std::numeric_limits<double>::infinity() : 0.5 + (rng() % 400) / 10.0;
    if (hw.gs % hw.simd_lanes != 0) continue;
    const Index n = hw.gs * static_cast<Index>(1 + rng() % 8);
    const Index m = 1 + static_cast<Index>(rng() % 300);
    check_report(simulate_gqmv(m, n, hw), m, n);
  }
}

TEST_CASE("calibration") {
  HwConfig hw;
  const auto c = calibrate_ddr(4.696, 32000, 2048, hw);
  CHECK(c.report.sustained_gops == doctest::Approx(4.696).epsilon(0.01));
  CHECK(c.ddr_bytes_per_cycle < 16);

  const auto top = calibrate_ddr(peak_gops(hw), 32000, 2048, hw);
  CHECK(top.ddr_bytes_per_cycle >= 16);

  try {
    calibrate_ddr(7.0, 32000, 2048, hw);
    FAIL("target above peak accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::infeasible);
  }
  CHECK_THROWS_AS(calibrate_ddr(0.0, 32000, 2048, hw), Error);
  // A single row never gets near peak regardless of bandwidth.
  CHECK_THROWS_AS(calibrate_ddr(6.0, 1, 256, hw), Error);
}
