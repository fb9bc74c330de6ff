#include "qlm/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qlm/error.hpp"

namespace qlm {

namespace {

// r/S with S = 2M/255, evaluated as r·127.5/M in double. Both products are
// exact, so the group extreme lands on exactly ±127.5 and the half-away
// rounding of that tie does not depend on how S was rounded to FP32.
std::int8_t quantize_value(float r, float max_abs, float scale) {
  if (!(scale > 0.0f)) return 0;
  const double q = std::round(static_cast<double>(r) * 127.5 / static_cast<double>(max_abs));
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

void quantize_groups(std::span<const float> real, Index gs, std::span<std::int8_t> values, std::span<float> scales) {
  const auto group = static_cast<std::size_t>(gs);
  for (std::size_t g = 0; g < scales.size(); ++g) {
    const auto chunk = real.subspan(g * group, group);
    float max_abs = 0.0f;
    for (float r : chunk) max_abs = std::max(max_abs, std::fabs(r));
    const float scale = group_scale(max_abs);
    scales[g] = scale;
    for (std::size_t k = 0; k < group; ++k) values[g * group + k] = quantize_value(chunk[k], max_abs, scale);
  }
}

}  // namespace

float group_scale(float max_abs) {
  if (max_abs == 0.0f) return 1.0f;
  // 2M/255 written as M/127.5 so that M near FLT_MAX does not overflow; the
  // quotient is the same correctly-rounded value.
  return max_abs / 127.5f;
}

void QuantizedTensor::check() const {
  const Index gs = spec.group_size;
  if (gs < 1) throw Error(Errc::invalid_shape, "group size must be >= 1");
  if (rows * cols != values.size()) throw Error(Errc::invalid_shape, "rows*cols does not match value count");
  if (values.size() % gs != 0) throw Error(Errc::invalid_shape, "value count not divisible by group size");
  if (scales.size() != values.size() / gs) throw Error(Errc::invalid_shape, "scale count does not match groups");
  for (Index i = 0; i < scales.size(); ++i) {
    if (!(std::isfinite(scales[i]) && scales[i] >= 0.0f)) throw Error(Errc::invalid_value, "bad scale");
  }
}

QuantizedTensor quantize(std::span<const float> real, QuantSpec spec, Index rows, Index cols) {
  const Index gs = spec.group_size;
  const auto n = static_cast<Index>(real.size());
  if (gs < 1) throw Error(Errc::invalid_shape, "group size must be >= 1");
  if (cols < 0) cols = rows > 0 ? n / rows : n;
  if (rows * cols != n) throw Error(Errc::invalid_shape, "shape does not match element count");
  if (n % gs != 0 || cols % gs != 0) {
    throw Error(Errc::invalid_shape,
                "length " + std::to_string(n) + " not divisible by group size " + std::to_string(gs));
  }
  for (float r : real) {
    if (!std::isfinite(r)) throw Error(Errc::invalid_value, "non-finite input");
  }
  QuantizedTensor q;
  q.spec = spec;
  q.rows = rows;
  q.cols = cols;
  q.values.resize(n);
  q.scales.resize(n / gs);
  quantize_groups(real, gs, {q.values.data(), static_cast<std::size_t>(n)},
                  {q.scales.data(), static_cast<std::size_t>(n / gs)});
  return q;
}

void quantize_into(std::span<const float> real, Index group_size, std::span<std::int8_t> values,
                   std::span<float> scales) {
  const auto gs = static_cast<std::size_t>(group_size);
  if (real.size() != values.size() || real.size() % gs != 0 || scales.size() != real.size() / gs) {
    throw Error(Errc::invalid_shape, "quantize_into buffer sizes inconsistent");
  }
  quantize_groups(real, group_size, values, scales);
}

Eigen::VectorXf dequantize(const QuantizedTensor& q) {
  const Index gs = q.spec.group_size;
  Eigen::VectorXf out(q.numel());
  for (Index i = 0; i < q.numel(); ++i) out[i] = static_cast<float>(q.values[i]) * q.scales[i / gs];
  return out;
}

namespace {

struct Moments {
  double mean = 0;
  double std = 0;
};

// Two-pass mean/std (population).
Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double ss = 0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / n);
  return m;
}

}  // namespace

ErrorStats error_stats(std::span<const float> original, std::span<const float> reconstructed) {
  if (original.size() != reconstructed.size()) throw Error(Errc::invalid_shape, "length mismatch");
  ErrorStats s;
  if (original.empty()) return s;

  std::vector<double> abs_err(original.size());
  std::vector<double> rel_pct;
  rel_pct.reserve(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double r = original[i];
    const double e = std::fabs(static_cast<double>(reconstructed[i]) - r);
    abs_err[i] = e;
    // 0/0 is undefined; zero originals are left out of the percentage stats.
    if (r != 0.0) rel_pct.push_back(100.0 * e / std::fabs(r));
  }
  const auto [lo, hi] = std::minmax_element(abs_err.begin(), abs_err.end());
  const Moments a = moments(abs_err);
  const Moments rel = moments(rel_pct);
  s.max = static_cast<float>(*hi);
  s.min = static_cast<float>(*lo);
  s.mean = static_cast<float>(a.mean);
  s.std = static_cast<float>(a.std);
  s.mean_rel_pct = static_cast<float>(rel.mean);
  s.std_rel_pct = static_cast<float>(rel.std);
  return s;
}

ErrorStats error_stats(std::span<const float> original, const QuantizedTensor& q) {
  if (static_cast<Index>(original.size()) != q.numel()) throw Error(Errc::invalid_shape, "length mismatch");
  const Eigen::VectorXf r = dequantize(q);
  return error_stats(original, std::span<const float>(r.data(), static_cast<std::size_t>(r.size())));
}

}  // namespace qlm
