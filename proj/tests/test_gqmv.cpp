#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracle.hpp"
#include "qlm/error.hpp"
#include "qlm/gqmv.hpp"

using namespace qlm;

namespace {

// FP32 group loops are compared against Σ|terms| of the accumulation.
void check_close(const Eigen::VectorXf& got, const std::vector<double>& want, const std::vector<double>& mag,
                 double tol) {
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(std::fabs(double{got[static_cast<Index>(i)]} - want[i]) <= tol * mag[i] + 1e-30);
  }
}

}  // namespace

TEST_CASE("hand-traced 1x4 instance") {
  const std::vector<std::int8_t> wq{1, 2, 3, 4}, xq{1, 1, 1, 1};
  const std::vector<float> ws{0.5f}, xs{2.0f};
  const GqmvProblem p{wq, ws, xq, xs, 1, 4, 4};
  CHECK(gqmv_reference(p)[0] == 10.0f);
  CHECK(gqmv_staged(p)[0] == 10.0f);
  CHECK(group_sums_reference(p)(0, 0) == 10);
}

TEST_CASE("zero operands give zero output") {
  std::mt19937_64 rng(1);
  auto in = oracle::random_instance(rng, 5, 64, 32);
  std::fill(in.wq.begin(), in.wq.end(), 0);
  CHECK(gqmv_reference(in.problem()).isZero(0));
  in = oracle::random_instance(rng, 5, 64, 32);
  std::fill(in.xq.begin(), in.xq.end(), 0);
  CHECK(gqmv_staged(in.problem()).isZero(0));
  CHECK(gqmv_reference(in.problem()).isZero(0));
}

TEST_CASE("shape errors") {
  std::mt19937_64 rng(2);
  auto in = oracle::random_instance(rng, 4, 64, 32);
  auto p = in.problem();
  p.n = 60;
  CHECK_THROWS_AS(gqmv_reference(p), Error);
  p = in.problem();
  p.ws = p.ws.subspan(1);
  try {
    gqmv_reference(p);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_shape);
  }
  auto odd = oracle::random_instance(rng, 2, 48, 24);
  try {
    gqmv_staged(odd.problem());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unsupported);
  }
  CHECK_NOTHROW(gqmv_reference(odd.problem()));
}

TEST_CASE("double-precision oracle") {
  std::mt19937_64 rng(3);
  for (Index n : {256, 512, 8192}) {
    const auto in = oracle::random_instance(rng, 8, n, 256);
    const auto p = in.problem();
    check_close(gqmv_reference(p), oracle::gqmv(p), oracle::gqmv_magnitude(p), 1e-5);
  }
}

TEST_CASE("dequantized product oracle") {
  std::mt19937_64 rng(4);
  const auto in = oracle::random_instance(rng, 8, 512, 256);
  const auto p = in.problem();
  const auto got = gqmv_reference(p);
  for (Index i = 0; i < 8; ++i) {
    double acc = 0, mag = 0;
    for (Index j = 0; j < 512; ++j) {
      const double w = static_cast<double>(in.wq[i * 512 + j]) * in.ws[(i * 512 + j) / 256];
      const double x = static_cast<double>(in.xq[j]) * in.xs[j / 256];
      acc += w * x;
      mag += std::fabs(w * x);
    }
    CHECK(std::fabs(got[i] - acc) <= 1e-4 * mag);
  }
}

TEST_CASE("staged kernel matches reference") {
  std::mt19937_64 rng(5);
  const auto in = oracle::random_instance(rng, 2048, 2048, 256);
  const auto p = in.problem();
  CHECK(group_sums_staged(p) == group_sums_reference(p));
  check_close(gqmv_staged(p), oracle::gqmv(p), oracle::gqmv_magnitude(p), 1e-6);
  const auto a = gqmv_reference(p);
  const auto b = gqmv_staged(p);
  const auto mag = oracle::gqmv_magnitude(p);
  for (Index i = 0; i < p.m; ++i) CHECK(std::fabs(double{a[i]} - double{b[i]}) <= 1e-6 * mag[static_cast<std::size_t>(i)]);
}

TEST_CASE("extreme group sums do not overflow") {
  const Index n = 256;
  std::vector<std::int8_t> wq(n, -128), xq(n, -128);
  const std::vector<float> ws{1.0f}, xs{1.0f};
  const GqmvProblem p{wq, ws, xq, xs, 1, n, n};
  CHECK(group_sums_reference(p)(0, 0) == 256 * 128 * 128);
  CHECK(group_sums_staged(p)(0, 0) == 256 * 128 * 128);
  CHECK(gqmv_staged(p)[0] == 4194304.0f);
}

TEST_CASE("doubling x doubles group sums") {
  std::mt19937_64 rng(6);
  auto in = oracle::random_instance(rng, 16, 512, 64);
  for (auto& v : in.xq) v = static_cast<std::int8_t>(v / 2);
  const auto base = group_sums_reference(in.problem());
  for (auto& v : in.xq) v = static_cast<std::int8_t>(v * 2);
  CHECK(group_sums_reference(in.problem()) == (base * 2).eval());
  CHECK(group_sums_staged(in.problem()) == (base * 2).eval());
}

TEST_CASE("row permutation permutes output") {
  std::mt19937_64 rng(7);
  const auto in = oracle::random_instance(rng, 32, 256, 64);
  std::vector<Index> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto out = in;
  for (Index i = 0; i < 32; ++i) {
    std::copy_n(in.wq.begin() + perm[i] * 256, 256, out.wq.begin() + i * 256);
    std::copy_n(in.ws.begin() + perm[i] * 4, 4, out.ws.begin() + i * 4);
  }
  const auto a = gqmv_reference(in.problem());
  const auto b = gqmv_reference(out.problem());
  const auto c = gqmv_staged(out.problem());
  const auto d = gqmv_staged(in.problem());
  for (Index i = 0; i < 32; ++i) {
    CHECK(b[i] == a[perm[i]]);
    CHECK(c[i] == d[perm[i]]);
  }
}

TEST_CASE("row ranges compose") {
  std::mt19937_64 rng(8);
  const auto in = oracle::random_instance(rng, 37, 128, 32);
  const auto p = in.problem();
  const auto full = gqmv_staged(p);
  std::vector<float> part(37);
  gqmv_staged_rows(p, 0, 10, part);
  gqmv_staged_rows(p, 10, 37, part);
  for (Index i = 0; i < 37; ++i) CHECK(part[static_cast<std::size_t>(i)] == full[i]);
}

TEST_CASE("concatenating QKV-shaped problems") {
  std::mt19937_64 rng(9);
  const Index dim = 2048;
  auto q = oracle::random_instance(rng, 2048, dim, 256);
  auto k = oracle::random_instance(rng, 256, dim, 256);
  auto v = oracle::random_instance(rng, 256, dim, 256);
  k.xq = q.xq;
  k.xs = q.xs;
  v.xq = q.xq;
  v.xs = q.xs;
  std::vector<GqmvProblem> parts{q.problem(), k.problem(), v.problem()};
  // Parts must point at the same x buffer.
  parts[1].xq = parts[0].xq;
  parts[1].xs = parts[0].xs;
  parts[2].xq = parts[0].xq;
  parts[2].xs = parts[0].xs;
  const RowStack stack = concat_rows(parts);
  CHECK(stack.rows() == 2560);
  CHECK(stack.row_offsets == std::vector<Index>{0, 2048, 2304, 2560});
  const auto all = gqmv_reference(stack.problem());
  const auto all_staged = gqmv_staged(stack.problem());
  for (std::size_t part = 0; part < 3; ++part) {
    const auto one = gqmv_reference(parts[part]);
    const auto one_staged = gqmv_staged(parts[part]);
    for (Index i = 0; i < one.size(); ++i) {
      CHECK(all[stack.row_offsets[part] + i] == one[i]);
      CHECK(all_staged[stack.row_offsets[part] + i] == one_staged[i]);
    }
  }
}

TEST_CASE("concatenation edge cases") {
  std::mt19937_64 rng(10);
  const auto a = oracle::random_instance(rng, 12, 128, 32);
  std::vector<GqmvProblem> one{a.problem()};
  const auto s = concat_rows(one);
  CHECK(s.rows() == 12);
  const auto x = gqmv_reference(s.problem());
  const auto y = gqmv_reference(a.problem());
  CHECK(x == y);

  // W1 | W3
  auto w1 = oracle::random_instance(rng, 96, 64, 32);
  auto w3 = oracle::random_instance(rng, 96, 64, 32);
  std::vector<GqmvProblem> ffn{w1.problem(), w3.problem()};
  ffn[1].xq = ffn[0].xq;
  ffn[1].xs = ffn[0].xs;
  CHECK(concat_rows(ffn).rows() == 192);

  const auto b = oracle::random_instance(rng, 4, 256, 32);
  std::vector<GqmvProblem> mixed{a.problem(), b.problem()};
  try {
    concat_rows(mixed);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_shape);
  }
}
