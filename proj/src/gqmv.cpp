#include "qlm/gqmv.hpp"

#include <array>
#include <bit>
#include <string>

#include "qlm/error.hpp"

namespace qlm {

GqmvProblem GqmvProblem::from(const QuantizedTensor& w, const QuantizedTensor& x) {
  if (w.spec.group_size != x.spec.group_size) throw Error(Errc::invalid_shape, "group size mismatch");
  return {w.value_span(), w.scale_span(), x.value_span(), x.scale_span(), w.rows, w.cols, w.spec.group_size};
}

void GqmvProblem::check() const {
  if (gs < 1 || n < 1 || m < 0) throw Error(Errc::invalid_shape, "bad dimensions");
  if (n % gs != 0) {
    throw Error(Errc::invalid_shape, "n=" + std::to_string(n) + " not divisible by gs=" + std::to_string(gs));
  }
  const auto groups = static_cast<std::size_t>(n / gs);
  const auto rows = static_cast<std::size_t>(m);
  const auto cols = static_cast<std::size_t>(n);
  if (wq.size() != rows * cols) throw Error(Errc::invalid_shape, "wq length != m*n");
  if (ws.size() != rows * groups) throw Error(Errc::invalid_shape, "ws length != m*n/gs");
  if (xq.size() != cols) throw Error(Errc::invalid_shape, "xq length != n");
  if (xs.size() != groups) throw Error(Errc::invalid_shape, "xs length != n/gs");
}

namespace {

std::int32_t reference_group_sum(const std::int8_t* w, const std::int8_t* x, Index gs) {
  std::int32_t group_sum = 0;
  for (Index k = 0; k < gs; ++k) group_sum += static_cast<std::int32_t>(x[k]) * static_cast<std::int32_t>(w[k]);
  return group_sum;
}

// Balanced binary reduction over gs lanes. Products are formed in INT16
// (|-128 * -128| = 2^14 fits); the first tree level widens to INT32.
std::int32_t staged_group_sum(const std::int8_t* w, const std::int16_t* x16, Index gs, std::int32_t* scratch) {
  const Index half = gs / 2;
  if (gs == 1) return static_cast<std::int16_t>(static_cast<std::int16_t>(w[0]) * x16[0]);
  for (Index k = 0; k < half; ++k) {
    const auto p0 = static_cast<std::int16_t>(static_cast<std::int16_t>(w[2 * k]) * x16[2 * k]);
    const auto p1 = static_cast<std::int16_t>(static_cast<std::int16_t>(w[2 * k + 1]) * x16[2 * k + 1]);
    scratch[k] = static_cast<std::int32_t>(p0) + static_cast<std::int32_t>(p1);
  }
  for (Index width = half; width > 1; width /= 2) {
    for (Index k = 0; k < width / 2; ++k) scratch[k] = scratch[2 * k] + scratch[2 * k + 1];
  }
  return scratch[0];
}

void check_staged(const GqmvProblem& p) {
  p.check();
  if (!std::has_single_bit(static_cast<std::uint64_t>(p.gs))) {
    throw Error(Errc::unsupported, "staged kernel needs a power-of-two group size, got " + std::to_string(p.gs));
  }
}

void check_rows(const GqmvProblem& p, Index row_begin, Index row_end, std::span<float> out) {
  if (row_begin < 0 || row_end > p.m || row_begin > row_end) throw Error(Errc::invalid_shape, "row range");
  if (static_cast<Index>(out.size()) < p.m) throw Error(Errc::invalid_shape, "output shorter than m");
}

}  // namespace

void gqmv_reference_rows(const GqmvProblem& p, Index row_begin, Index row_end, std::span<float> out) {
  check_rows(p, row_begin, row_end, out);
  const Index groups = p.n / p.gs;
  for (Index i = row_begin; i < row_end; ++i) {
    const std::int8_t* row = p.wq.data() + i * p.n;
    const float* row_scales = p.ws.data() + i * groups;
    float sum = 0.0f;
    for (Index g = 0; g < groups; ++g) {
      const std::int32_t group_sum = reference_group_sum(row + g * p.gs, p.xq.data() + g * p.gs, p.gs);
      sum += static_cast<float>(group_sum) * row_scales[g] * p.xs[static_cast<std::size_t>(g)];
    }
    out[static_cast<std::size_t>(i)] = sum;
  }
}

Eigen::VectorXf gqmv_reference(const GqmvProblem& p) {
  p.check();
  Eigen::VectorXf out(p.m);
  gqmv_reference_rows(p, 0, p.m, {out.data(), static_cast<std::size_t>(p.m)});
  return out;
}

RowMatrixXi32 group_sums_reference(const GqmvProblem& p) {
  p.check();
  const Index groups = p.n / p.gs;
  RowMatrixXi32 sums(p.m, groups);
  for (Index i = 0; i < p.m; ++i) {
    for (Index g = 0; g < groups; ++g) {
      sums(i, g) = reference_group_sum(p.wq.data() + i * p.n + g * p.gs, p.xq.data() + g * p.gs, p.gs);
    }
  }
  return sums;
}

namespace {

// Pre-processing stage state: x widened once and kept resident.
struct StagedInput {
  std::vector<std::int16_t> x16;
  std::vector<std::int32_t> tree;
  std::vector<float> group_sum_f;
  std::vector<float> float_scale;

  explicit StagedInput(const GqmvProblem& p)
      : x16(p.xq.begin(), p.xq.end()),
        tree(static_cast<std::size_t>(std::max<Index>(1, p.gs / 2))),
        group_sum_f(static_cast<std::size_t>(p.n / p.gs)),
        float_scale(static_cast<std::size_t>(p.n / p.gs)) {}
};

}  // namespace

void gqmv_staged_rows(const GqmvProblem& p, Index row_begin, Index row_end, std::span<float> out) {
  check_staged(p);
  check_rows(p, row_begin, row_end, out);
  const Index groups = p.n / p.gs;
  StagedInput in(p);
  for (Index i = row_begin; i < row_end; ++i) {
    const std::int8_t* row = p.wq.data() + i * p.n;
    const float* row_scales = p.ws.data() + i * groups;
    // dot-product stage
    for (Index g = 0; g < groups; ++g) {
      const std::int32_t s = staged_group_sum(row + g * p.gs, in.x16.data() + g * p.gs, p.gs, in.tree.data());
      in.group_sum_f[static_cast<std::size_t>(g)] = static_cast<float>(s);
    }
    // accumulate stage
    for (Index g = 0; g < groups; ++g) {
      in.float_scale[static_cast<std::size_t>(g)] = row_scales[g] * p.xs[static_cast<std::size_t>(g)];
    }
    float sum = 0.0f;
    for (Index g = 0; g < groups; ++g) {
      sum += in.float_scale[static_cast<std::size_t>(g)] * in.group_sum_f[static_cast<std::size_t>(g)];
    }
    out[static_cast<std::size_t>(i)] = sum;
  }
}

Eigen::VectorXf gqmv_staged(const GqmvProblem& p) {
  check_staged(p);
  Eigen::VectorXf out(p.m);
  gqmv_staged_rows(p, 0, p.m, {out.data(), static_cast<std::size_t>(p.m)});
  return out;
}

RowMatrixXi32 group_sums_staged(const GqmvProblem& p) {
  check_staged(p);
  const Index groups = p.n / p.gs;
  StagedInput in(p);
  RowMatrixXi32 sums(p.m, groups);
  for (Index i = 0; i < p.m; ++i) {
    for (Index g = 0; g < groups; ++g) {
      sums(i, g) = staged_group_sum(p.wq.data() + i * p.n + g * p.gs, in.x16.data() + g * p.gs, p.gs, in.tree.data());
    }
  }
  return sums;
}

GqmvProblem RowStack::problem() const {
  return {wq, ws, xq, xs, rows(), n, gs};
}

RowStack concat_rows(std::span<const GqmvProblem> parts) {
  if (parts.empty()) throw Error(Errc::invalid_shape, "no parts to concatenate");
  RowStack stack;
  const GqmvProblem& first = parts.front();
  stack.n = first.n;
  stack.gs = first.gs;
  stack.xq = first.xq;
  stack.xs = first.xs;
  stack.row_offsets.push_back(0);
  for (const GqmvProblem& part : parts) {
    part.check();
    if (part.n != first.n || part.gs != first.gs) throw Error(Errc::invalid_shape, "parts disagree on n or gs");
    if (part.xq.data() != first.xq.data() || part.xs.data() != first.xs.data()) {
      if (!std::equal(part.xq.begin(), part.xq.end(), first.xq.begin()) ||
          !std::equal(part.xs.begin(), part.xs.end(), first.xs.begin())) {
        throw Error(Errc::invalid_shape, "parts do not share the input vector");
      }
    }
    stack.wq.insert(stack.wq.end(), part.wq.begin(), part.wq.end());
    stack.ws.insert(stack.ws.end(), part.ws.begin(), part.ws.end());
    stack.row_offsets.push_back(stack.row_offsets.back() + part.m);
  }
  return stack;
}

}  // namespace qlm
