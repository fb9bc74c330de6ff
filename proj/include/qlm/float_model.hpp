#pragma once

#include <span>

#include "qlm/config.hpp"
#include "qlm/model.hpp"

namespace qlm {

/// Unquantized FP32 forward pass over the original weights, same
/// architecture as Transformer. Serves as the accuracy baseline for W8A8.
class FloatTransformer {
 public:
  explicit FloatTransformer(const FloatWeights& weights);

  std::span<const float> forward(Index token, Index pos);
  void reset() { cache_.reset(); }

 private:
  const FloatWeights& w_;
  ModelConfig cfg_;
  KVCache cache_;
  Eigen::VectorXf x_, att_, logits_;
  RowMatrixXf scores_;
};

}  // namespace qlm
