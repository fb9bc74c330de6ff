#include <filesystem>
#include <random>
#include <thread>

#include "doctest.h"
#include "qlm/error.hpp"
#include "qlm/model.hpp"
#include "qlm/stream.hpp"
#include "testutil.hpp"

using namespace qlm;
using namespace std::chrono_literals;

namespace {

struct StreamFixture {
  TempDir dir;
  ModelConfig cfg = tiny_config();
  std::filesystem::path path;

  explicit StreamFixture(Index layers = 4) {
    cfg.n_layers = layers;
    path = dir.path / "m.lamf";
    write_model(gen_synthetic(cfg, 11), path);
  }
};

}  // namespace

TEST_CASE("closed-form schedule examples") {
  ScheduleCosts c{std::vector<double>(22, 10.0), std::vector<double>(22, 8.0)};
  const auto sync = plan_schedule(c, ScheduleMode::sync);
  const auto async = plan_schedule(c, ScheduleMode::async);
  CHECK(sync.total == 396.0);
  CHECK(async.total == 228.0);
  CHECK(sync.total / async.total == doctest::Approx(1.74).epsilon(0.005));

  ScheduleCosts zero{{3, 1, 4, 1, 5}, {0, 0, 0, 0, 0}};
  CHECK(plan_schedule(zero, ScheduleMode::sync).total == 14.0);
  CHECK(plan_schedule(zero, ScheduleMode::async).total == 14.0);

  ScheduleCosts one{{7}, {2}};
  CHECK(plan_schedule(one, ScheduleMode::sync).total == 9.0);
  CHECK(plan_schedule(one, ScheduleMode::async).total == 9.0);

  ScheduleCosts neg{{1, 2}, {1, -1}};
  try {
    plan_schedule(neg, ScheduleMode::async);
    FAIL("negative cost accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_input);
  }
  CHECK_THROWS_AS(plan_schedule(ScheduleCosts{}, ScheduleMode::sync), Error);
}

TEST_CASE("timeline ordering") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0, 5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 1 + rng() % 12;
    ScheduleCosts c;
    for (std::size_t l = 0; l < L; ++l) {
      c.compute.push_back(d(rng));
      c.transfer.push_back(d(rng));
    }
    const auto s = plan_schedule(c, ScheduleMode::sync);
    const auto a = plan_schedule(c, ScheduleMode::async);
    CHECK(a.total <= s.total);
    for (std::size_t l = 0; l < L; ++l) {
      CHECK(a.compute[l].start >= a.transfer[l].end);
      CHECK(s.compute[l].start >= s.transfer[l].end);
      if (l > 0) {
        CHECK(a.compute[l].start >= a.compute[l - 1].end);
        CHECK(s.transfer[l].start >= s.compute[l - 1].end);
        // Two buffers: transfer l cannot begin before compute l-2 frees its slot.
        if (l > 1) CHECK(a.transfer[l].start >= a.compute[l - 2].end);
      }
    }
    CHECK(a.total == a.compute.back().end);
  }
}

TEST_CASE("acquire semantics") {
  StreamFixture f;
  const ModelFile mf = read_model(f.path);
  LayerStreamer s(mf);
  // Layer 0 is loaded at construction.
  CHECK(s.slot_state(0) == SlotState::ready);
  CHECK(s.slot_layer(0) == 0);
  CHECK(s.slot_state(1) == SlotState::empty);
  CHECK(s.resident_weight_bytes() == mf.config.persistent_bytes() + mf.config.layer_bytes());

  const auto expected = mf.load_all_layers();
  for (int step = 0; step < 3; ++step) {
    for (Index l = 0; l < mf.config.n_layers; ++l) {
      const LayerWeights& w = s.acquire(l);
      CHECK(w.wqkv.values == expected[static_cast<std::size_t>(l)].wqkv.values);
      CHECK(w.w2.scales == expected[static_cast<std::size_t>(l)].w2.scales);
      CHECK(s.resident_weight_bytes() <= mf.config.persistent_bytes() + 2 * mf.config.layer_bytes());
      s.release(l);
    }
  }
  std::this_thread::sleep_for(5ms);
  CHECK(s.resident_weight_bytes() == mf.config.persistent_bytes() + 2 * mf.config.layer_bytes());
  CHECK(s.resident_weight_bytes() < mf.config.persistent_bytes() + 4 * mf.config.layer_bytes());
  CHECK_THROWS_AS(s.release(1), Error);
  CHECK_THROWS_AS(s.acquire(4), Error);
}

TEST_CASE("prefetched layer returns without waiting") {
  StreamFixture f;
  const ModelFile mf = read_model(f.path);
  LayerStreamer s(mf, {true, 20ms});
  s.acquire(0);
  std::this_thread::sleep_for(60ms);  // prefetch of layer 1 completes meanwhile
  s.release(0);
  const auto t0 = std::chrono::steady_clock::now();
  s.acquire(1);
  CHECK(std::chrono::steady_clock::now() - t0 < 10ms);
  s.release(1);
}

TEST_CASE("sync mode loads on demand") {
  StreamFixture f;
  const ModelFile mf = read_model(f.path);
  LayerStreamer s(mf, {false, 0us});
  s.acquire(0);
  s.release(0);
  CHECK(s.slot_state(1) == SlotState::empty);
  s.acquire(1);
  s.release(1);
  const auto tr = s.trace();
  REQUIRE(tr.size() == 2);
  CHECK(tr[1].load_seconds > 0);
}

TEST_CASE("truncated file names the layer") {
  StreamFixture f;
  const ModelFile mf = read_model(f.path);
  std::filesystem::resize_file(f.path, mf.layer_offsets[2] + 10);
  LayerStreamer s(mf);
  s.acquire(0);
  s.release(0);
  s.acquire(1);
  s.release(1);
  try {
    s.acquire(2);
    FAIL("short layer read accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}

TEST_CASE("streamed decode matches resident decode") {
  StreamFixture f;
  const ModelFile mf = read_model(f.path);
  LayerStreamer s(mf);
  ResidentLayers r(mf.load_all_layers());
  Transformer a(mf.config, mf.persistent, s);
  Transformer b(mf.config, mf.persistent, r);
  for (Index pos = 0; pos < 5; ++pos) {
    const auto la = a.forward(5, pos);
    const auto lb = b.forward(5, pos);
    CHECK(std::equal(la.begin(), la.end(), lb.begin()));
  }
}

TEST_CASE("trace costs") {
  StreamFixture f(3);
  const ModelFile mf = read_model(f.path);
  LayerStreamer s(mf, {true, 2ms});
  for (Index l = 0; l < 3; ++l) {
    s.acquire(l);
    std::this_thread::sleep_for(5ms);
    s.release(l);
  }
  const auto c = costs_from_trace(s.trace(), std::chrono::steady_clock::now());
  REQUIRE(c.compute.size() == 3);
  for (double x : c.compute) CHECK(x >= 0.005);
  for (double x : c.transfer) CHECK(x >= 0.002);
}
