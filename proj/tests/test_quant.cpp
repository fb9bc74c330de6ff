#include <cfloat>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"
#include "qlm/error.hpp"
#include "qlm/quant.hpp"

using namespace qlm;

namespace {

std::vector<float> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("worked group [2, -1, 0.5, 1.5]") {
  const std::vector<float> r{2.0f, -1.0f, 0.5f, 1.5f};
  const auto q = quantize(std::span<const float>(r), {4});
  REQUIRE(q.scales.size() == 1);
  CHECK(q.scales[0] == doctest::Approx(4.0 / 255.0).epsilon(1e-7));
  CHECK(q.values[0] == 127);
  CHECK(q.values[1] == -64);
  CHECK(q.values[2] == 32);
  CHECK(q.values[3] == 96);

  const auto d = dequantize(q);
  CHECK(d[0] == doctest::Approx(1.99216).epsilon(1e-5));
  CHECK(d[1] == doctest::Approx(-1.00392).epsilon(1e-5));
  CHECK(d[2] == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(d[3] == doctest::Approx(1.50588).epsilon(1e-5));
}

TEST_CASE("zero group stores scale one") {
  const std::vector<float> r(4, 0.0f);
  const auto q = quantize(std::span<const float>(r), {4});
  CHECK(q.scales[0] == 1.0f);
  for (int i = 0; i < 4; ++i) CHECK(q.values[i] == 0);
  CHECK(dequantize(q).isZero(0));
}

TEST_CASE("shape and value errors") {
  const std::vector<float> r(6, 1.0f);
  try {
    quantize(std::span<const float>(r), {4});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_shape);
  }
  std::vector<float> bad(4, 1.0f);
  bad[2] = std::numeric_limits<float>::quiet_NaN();
  try {
    quantize(std::span<const float>(bad), {4});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_value);
  }
  bad[2] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(quantize(std::span<const float>(bad), {4}), Error);
}

TEST_CASE("matches the double-precision quantizer") {
  const auto r = normals(10240, 1);
  const auto q = quantize(std::span<const float>(r), {256});
  const std::vector<double> rd(r.begin(), r.end());
  const auto o = oracle::quantize(rd, 256);
  int mismatches = 0;
  for (std::size_t i = 0; i < r.size(); ++i) mismatches += q.values[static_cast<Index>(i)] != o.values[i];
  // Values may only differ where r/S sits within float rounding of a half.
  CHECK(mismatches <= 2);
  for (std::size_t g = 0; g < o.scales.size(); ++g) {
    CHECK(std::fabs(q.scales[static_cast<Index>(g)] - o.scales[g]) <= o.scales[g] * 1.2e-7);
  }
}

TEST_CASE("round-trip bound on normal data") {
  const auto r = normals(10240, 2);
  const auto q = quantize(std::span<const float>(r), {256});
  const auto d = dequantize(q);
  for (Index i = 0; i < d.size(); ++i) {
    const double s = q.scales[i / 256];
    CHECK(std::fabs(double{d[i]} - double{r[static_cast<std::size_t>(i)]}) <= s * (0.5 + 1.0 / 255.0) + std::ldexp(1.0, -20));
  }
}

TEST_CASE("padded single value round trip") {
  std::vector<float> r(8, 0.0f);
  r[0] = 1.0f;
  const auto q = quantize(std::span<const float>(r), {8});
  const auto d = dequantize(q);
  for (Index i = 0; i < 8; ++i) CHECK(std::fabs(d[i] - r[static_cast<std::size_t>(i)]) <= q.scales[0] * (0.5 + 1.0 / 255.0));
}

TEST_CASE("scale within one ulp of 2M/255") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> expo(-30, 30);
  for (int t = 0; t < 20000; ++t) {
    const float m = static_cast<float>(std::pow(2.0, expo(rng)));
    const float s = group_scale(m);
    const double exact = 2.0 * double{m} / 255.0;
    const float ulp = std::nextafter(static_cast<float>(exact), INFINITY) - static_cast<float>(exact);
    CHECK(std::fabs(double{s} - exact) <= ulp);
  }
  CHECK(std::isfinite(group_scale(FLT_MAX)));
}

TEST_CASE("requantizing the reconstruction is idempotent where nothing clamped") {
  const auto r = normals(1 << 14, 4);
  const auto q = quantize(std::span<const float>(r), {64});
  const Eigen::VectorXf d = dequantize(q);
  const auto q2 = quantize(std::span<const float>(d.data(), static_cast<std::size_t>(d.size())), {64});
  const std::vector<double> dd(d.data(), d.data() + d.size());
  const auto o2 = oracle::quantize(dd, 64);
  // A positive group maximum lands on +127.5 and clamps to 127; only groups
  // whose extreme is negative (stored as -128) are clamp-free.
  int groups = 0;
  for (Index g = 0; g < q.scales.size(); ++g) {
    bool clamped = false;
    for (Index k = 0; k < 64; ++k) clamped |= q.values[g * 64 + k] == 127;
    if (clamped) continue;
    ++groups;
    for (Index i = g * 64; i < (g + 1) * 64; ++i) {
      CHECK(q2.values[i] == q.values[i]);
      CHECK(o2.values[static_cast<std::size_t>(i)] == q.values[i]);
    }
  }
  CHECK(groups > 50);
}

TEST_CASE("adversarial inputs stay in range") {
  std::vector<float> r{FLT_MAX, -FLT_MAX, 0.0f, 1.0f,
                       FLT_TRUE_MIN, -FLT_TRUE_MIN, FLT_MIN, -FLT_MIN,
                       -FLT_MAX, -1e-30f, 1e-30f, 0.0f,
                       FLT_TRUE_MIN, 0.0f, 0.0f, 0.0f};
  const auto q = quantize(std::span<const float>(r), {4});
  q.check();
  for (Index i = 0; i < q.numel(); ++i) {
    CHECK(q.values[i] >= -128);
    CHECK(q.values[i] <= 127);
  }
  CHECK(q.values[0] == 127);
  CHECK(q.values[1] == -128);
  for (Index g = 0; g < q.scales.size(); ++g) CHECK(std::isfinite(q.scales[g]));
}

TEST_CASE("error statistics") {
  const std::vector<float> a{1.0f, -2.0f, 3.0f};
  const auto same = error_stats(a, a);
  CHECK(same.max == 0);
  CHECK(same.min == 0);
  CHECK(same.mean == 0);
  CHECK(same.std == 0);

  const std::vector<float> one{1.0f}, rec{0.99f};
  const auto s = error_stats(one, rec);
  CHECK(s.max == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(s.mean == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(s.std == 0);
  CHECK(s.mean_rel_pct == doctest::Approx(1.0).epsilon(1e-4));

  const std::vector<float> short_one{1.0f, 2.0f};
  CHECK_THROWS_AS(error_stats(one, short_one), Error);

  // Zero originals are excluded from the relative figures.
  const std::vector<float> z{0.0f, 2.0f}, zr{0.5f, 1.0f};
  CHECK(error_stats(z, zr).mean_rel_pct == doctest::Approx(50.0));
}

TEST_CASE("error statistics on about a million normal values") {
  const auto r = normals(1000192, 5);
  const auto q = quantize(std::span<const float>(r), {256});
  const auto s = error_stats(r, q);
  const auto d = dequantize(q);
  double sum = 0, mx = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double e = std::fabs(double{d[static_cast<Index>(i)]} - double{r[i]});
    sum += e;
    mx = std::max(mx, e);
  }
  CHECK(s.mean == doctest::Approx(sum / 1000192.0).epsilon(1e-5));
  CHECK(s.max == doctest::Approx(mx).epsilon(1e-6));
  CHECK(s.mean < 1e-2);
  CHECK(s.min <= s.mean);
  CHECK(s.mean <= s.max);
}
