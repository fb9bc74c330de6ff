#include "qlm/selftest.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "qlm/error.hpp"
#include "qlm/float_model.hpp"
#include "qlm/gqmv.hpp"
#include "qlm/model.hpp"
#include "qlm/modelio.hpp"
#include "qlm/ops.hpp"
#include "qlm/pipesim.hpp"
#include "qlm/quant.hpp"
#include "qlm/sampler.hpp"
#include "qlm/stream.hpp"
#include "qlm/tokenizer.hpp"

namespace qlm {

namespace {

bool close(double a, double b, double rel) { return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b)); }

bool quant_example() {
  const float r[] = {2.0f, -1.0f, 0.5f, 1.5f};
  const QuantizedTensor q = quantize(std::span<const float>(r), {4});
  return q.values[0] == 127 && q.values[1] == -64 && q.values[2] == 32 && q.values[3] == 96 &&
         q.scales[0] == 2.0f / 127.5f;
}

bool quant_round_trip() {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> dist;
  std::vector<float> r(4096);
  for (float& v : r) v = dist(rng);
  const QuantizedTensor q = quantize(std::span<const float>(r), {256});
  const Eigen::VectorXf back = dequantize(q);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double s = q.scales[static_cast<Index>(i / 256)];
    if (std::fabs(back[static_cast<Index>(i)] - r[i]) > s * (0.5 + 1.0 / 255) + std::ldexp(1.0, -20)) return false;
  }
  return true;
}

bool gqmv_example() {
  const std::int8_t w[] = {1, 2, 3, 4};
  const std::int8_t x[] = {1, 1, 1, 1};
  const float ws[] = {0.5f};
  const float xs[] = {2.0f};
  const GqmvProblem p{w, ws, x, xs, 1, 4, 4};
  return gqmv_reference(p)[0] == 10.0f && gqmv_staged(p)[0] == 10.0f;
}

bool gqmv_agreement() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> iv(-128, 127);
  std::uniform_real_distribution<float> sv(1e-3f, 1e-1f);
  const Index m = 32, n = 512, gs = 64;
  std::vector<std::int8_t> w(static_cast<std::size_t>(m * n)), x(static_cast<std::size_t>(n));
  std::vector<float> ws(static_cast<std::size_t>(m * n / gs)), xs(static_cast<std::size_t>(n / gs));
  for (auto& v : w) v = static_cast<std::int8_t>(iv(rng));
  for (auto& v : x) v = static_cast<std::int8_t>(iv(rng));
  for (auto& v : ws) v = sv(rng);
  for (auto& v : xs) v = sv(rng);
  const GqmvProblem p{w, ws, x, xs, m, n, gs};
  return group_sums_reference(p) == group_sums_staged(p);
}

bool ops_examples() {
  Eigen::Vector2f x(2, 0), w(1, 1);
  const Eigen::Vector2f y = rmsnorm(x, w, 0.0f);
  Eigen::VectorXf h1(1), h3(1);
  h1 << 1;
  h3 << 1;
  return close(y[0], std::sqrt(2.0), 1e-6) && y[1] == 0 && close(swiglu(h1, h3)[0], 0.7310586, 1e-6);
}

bool schedule_identity() {
  const ScheduleCosts c{std::vector<double>(22, 10.0), std::vector<double>(22, 8.0)};
  return plan_schedule(c, ScheduleMode::sync).total == 396.0 && plan_schedule(c, ScheduleMode::async).total == 228.0;
}

bool pipesim_peak() {
  HwConfig hw;
  const SimReport r = simulate_gqmv(2048, 2048, hw);
  return close(peak_gops(hw), 6.56, 1e-12) && r.sustained_gops <= r.peak_gops && close(r.sustained_gops, 6.56, 0.02);
}

bool sampler_greedy() {
  const float logits[] = {0, 5, 1};
  return argmax(logits) == 1;
}

bool tokenizer_round_trip() {
  const Vocabulary v = Vocabulary::synthetic(512);
  const std::string s = "the quick brown fox \xE2\x9C\x93 \xFF";
  return v.decode(v.encode(s)) == s;
}

bool tiny_decode_finite() {
  const FloatWeights fw = gen_synthetic(tiny_config(), 7);
  const PersistentWeights p = quantize_persistent(fw);
  ResidentLayers layers(quantize_layers(fw));
  Transformer t(fw.config, p, layers);
  int token = Vocabulary::kBos;
  for (Index pos = 0; pos < 16; ++pos) {
    const auto logits = t.forward(token, pos);
    for (float v : logits) {
      if (!std::isfinite(v)) return false;
    }
    token = argmax(logits);
  }
  return true;
}

}  // namespace

SelfTestResult run_selftest() {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"quantize example group", quant_example},
      {"quantize round-trip bound", quant_round_trip},
      {"gqmv hand-traced instance", gqmv_example},
      {"gqmv staged/reference group sums", gqmv_agreement},
      {"rmsnorm and swiglu values", ops_examples},
      {"schedule closed form", schedule_identity},
      {"pipeline simulator roofline", pipesim_peak},
      {"greedy sampling", sampler_greedy},
      {"tokenizer round trip", tokenizer_round_trip},
      {"tiny model decode is finite", tiny_decode_finite},
  };
  SelfTestResult r;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    std::string detail;
    try {
      ok = check();
    } catch (const std::exception& e) {
      detail = std::string(" (") + e.what() + ")";
    }
    (ok ? r.passed : r.failed)++;
    r.lines.push_back(std::string(ok ? "PASS " : "FAIL ") + name + detail);
  }
  return r;
}

}  // namespace qlm
