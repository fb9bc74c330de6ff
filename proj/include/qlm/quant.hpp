#pragma once

#include <cstddef>
#include <span>

#include "qlm/types.hpp"

namespace qlm {

struct QuantSpec {
  Index group_size = 256;
};

/// Group-wise symmetric INT8 tensor. Values are stored flattened row-major,
/// with one FP32 scale per run of `group_size` consecutive values.
struct QuantizedTensor {
  VectorXi8 values;
  Eigen::VectorXf scales;
  Index rows = 0;
  Index cols = 0;
  QuantSpec spec;

  Index numel() const { return values.size(); }
  Index groups_per_row() const { return cols / spec.group_size; }

  /// Storage footprint: one byte per value plus four per scale.
  std::size_t bytes() const {
    return static_cast<std::size_t>(values.size()) + sizeof(float) * static_cast<std::size_t>(scales.size());
  }

  std::span<const std::int8_t> value_span() const { return {values.data(), static_cast<std::size_t>(values.size())}; }
  std::span<const float> scale_span() const { return {scales.data(), static_cast<std::size_t>(scales.size())}; }

  /// Validates the structural invariants; throws Error on violation.
  void check() const;
};

/// Absolute and relative (percent) quantization error statistics.
struct ErrorStats {
  float max = 0;
  float min = 0;
  float mean = 0;
  float std = 0;
  float mean_rel_pct = 0;
  float std_rel_pct = 0;
};

/// Quantizes `real` (treated as a `rows x cols` row-major matrix, or a
/// single row when cols is omitted). Each group gets S = 2·max|r|/255 and
/// values round-half-away-from-zero(r/S) clamped to [-128, 127]. An all-zero
/// group stores scale 1.
QuantizedTensor quantize(std::span<const float> real, QuantSpec spec, Index rows = 1, Index cols = -1);

template <typename Derived>
QuantizedTensor quantize(const Eigen::DenseBase<Derived>& real, QuantSpec spec) {
  using Plain = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if constexpr (Derived::IsVectorAtCompileTime) {
    const Eigen::VectorXf flat = real.derived().template cast<float>();
    return quantize(std::span<const float>(flat.data(), static_cast<std::size_t>(flat.size())), spec);
  } else {
    const Plain flat = real.derived().template cast<float>();
    return quantize(std::span<const float>(flat.data(), static_cast<std::size_t>(flat.size())), spec, flat.rows(),
                    flat.cols());
  }
}

/// In-place activation quantization into preallocated storage; used on the
/// hot path where the destination buffers are reused every call.
void quantize_into(std::span<const float> real, Index group_size, std::span<std::int8_t> values,
                   std::span<float> scales);

/// Scale for one group with the given max |r|.
float group_scale(float max_abs);

Eigen::VectorXf dequantize(const QuantizedTensor& q);

ErrorStats error_stats(std::span<const float> original, std::span<const float> reconstructed);
ErrorStats error_stats(std::span<const float> original, const QuantizedTensor& q);

}  // namespace qlm
