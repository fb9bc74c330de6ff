#pragma once

#include <cmath>

#include "qlm/config.hpp"
#include "qlm/error.hpp"
#include "qlm/types.hpp"

namespace qlm {

inline constexpr float kRmsEps = 1e-5f;
inline constexpr double kRopeTheta = 10000.0;

/// y = weight ⊙ x / sqrt(mean(x²) + eps)
template <typename DerivedX, typename DerivedW>
Vector<typename DerivedX::Scalar> rmsnorm(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedW>& weight,
                                          typename DerivedX::Scalar eps = typename DerivedX::Scalar(kRmsEps)) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar mean_sq = x.squaredNorm() / static_cast<Scalar>(x.size());
  const Scalar inv_rms = Scalar(1) / std::sqrt(mean_sq + eps);
  return (weight.derived().template cast<Scalar>().array() * x.array() * inv_rms).matrix();
}

/// Rotates consecutive pairs within each head of q (dim) and k (kv_dim) by
/// pos·θ^(-2i/head_dim).
template <typename DerivedQ, typename DerivedK>
void rope_apply(Eigen::MatrixBase<DerivedQ>& q, Eigen::MatrixBase<DerivedK>& k, Index pos, const ModelConfig& cfg) {
  using Scalar = typename DerivedQ::Scalar;
  if (pos < 0 || pos >= cfg.seq_len) throw Error(Errc::position, "rope position " + std::to_string(pos));
  const Index head_dim = cfg.head_dim();
  auto rotate = [&](auto& v) {
    for (Index i = 0; i < v.size(); i += 2) {
      const Index pair = i % head_dim;
      const Scalar freq =
          Scalar(1) / std::pow(static_cast<Scalar>(kRopeTheta), static_cast<Scalar>(pair) / static_cast<Scalar>(head_dim));
      const Scalar angle = static_cast<Scalar>(pos) * freq;
      const Scalar c = std::cos(angle);
      const Scalar s = std::sin(angle);
      const Scalar v0 = v[i];
      const Scalar v1 = v[i + 1];
      v[i] = v0 * c - v1 * s;
      v[i + 1] = v0 * s + v1 * c;
    }
  };
  rotate(q.derived());
  rotate(k.derived());
}

/// Numerically stable in-place softmax.
template <typename Derived>
void softmax(Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return;
  const Scalar max = x.maxCoeff();
  x = (x.array() - max).exp().matrix();
  x /= x.sum();
}

template <typename Derived>
void softmax(Eigen::MatrixBase<Derived>&& x) {
  softmax(x);
}

/// silu(h1) ⊙ h3
template <typename Derived1, typename Derived3>
Vector<typename Derived1::Scalar> swiglu(const Eigen::MatrixBase<Derived1>& h1, const Eigen::MatrixBase<Derived3>& h3) {
  using Scalar = typename Derived1::Scalar;
  if (h1.size() != h3.size()) throw Error(Errc::invalid_shape, "swiglu operands differ in length");
  const auto a = h1.array();
  return (a * (Scalar(1) / (Scalar(1) + (-a).exp())) * h3.array()).matrix();
}

}  // namespace qlm
