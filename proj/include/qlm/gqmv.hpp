#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qlm/quant.hpp"
#include "qlm/types.hpp"

namespace qlm {

/// Non-owning view of one group-wise quantized matrix-vector product
/// out = W·x with W of shape (m, n). Scales are indexed row-major by group.
struct GqmvProblem {
  std::span<const std::int8_t> wq;
  std::span<const float> ws;
  std::span<const std::int8_t> xq;
  std::span<const float> xs;
  Index m = 0;
  Index n = 0;
  Index gs = 256;

  static GqmvProblem from(const QuantizedTensor& w, const QuantizedTensor& x);

  /// Throws Errc::invalid_shape if any array length disagrees with (m, n, gs).
  void check() const;
};

/// Row-wise transcription of the reference algorithm: INT32 group sums,
/// then sum += group_sum * ws * xs sequentially in group order.
Eigen::VectorXf gqmv_reference(const GqmvProblem& p);

/// Computes rows [row_begin, row_end) into out[row_begin..row_end). Rows are
/// independent, so disjoint ranges may run on different threads.
void gqmv_reference_rows(const GqmvProblem& p, Index row_begin, Index row_end, std::span<float> out);

/// Integer group sums (m x n/gs) of the reference kernel.
RowMatrixXi32 group_sums_reference(const GqmvProblem& p);

/// Hardware-shaped kernel: INT8 widened to INT16, lane products reduced by a
/// balanced adder tree whose first level widens to INT32, group sums cast to
/// FP32 and dotted with float_scale = ws * xs. Requires gs to be a power of two.
Eigen::VectorXf gqmv_staged(const GqmvProblem& p);
void gqmv_staged_rows(const GqmvProblem& p, Index row_begin, Index row_end, std::span<float> out);
RowMatrixXi32 group_sums_staged(const GqmvProblem& p);

/// Weights of several problems that share one input vector, stacked by rows
/// so that a single kernel launch produces all outputs.
struct RowStack {
  std::vector<std::int8_t> wq;
  std::vector<float> ws;
  std::span<const std::int8_t> xq;
  std::span<const float> xs;
  Index n = 0;
  Index gs = 0;
  std::vector<Index> row_offsets;  // size parts+1

  GqmvProblem problem() const;
  Index rows() const { return row_offsets.empty() ? 0 : row_offsets.back(); }
};

RowStack concat_rows(std::span<const GqmvProblem> parts);

}  // namespace qlm
