#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qlm/gqmv.hpp"
#include "qlm/quant.hpp"
#include "qlm/types.hpp"

namespace qlm {

struct ModelConfig {
  Index dim = 0;
  Index hidden_dim = 0;
  Index n_layers = 0;
  Index n_heads = 0;
  Index n_kv_heads = 0;
  Index vocab_size = 0;
  Index seq_len = 0;
  Index gs = 256;
  bool shared_classifier = false;

  Index kv_dim() const { return dim * n_kv_heads / n_heads; }
  Index head_dim() const { return dim / n_heads; }
  Index kv_group() const { return n_heads / n_kv_heads; }
  QuantSpec quant_spec() const { return {gs}; }

  /// Throws Errc::invalid_input if any structural invariant fails.
  void check() const;

  /// Quantized bytes of one transformer layer (the 7 streamed matrices).
  std::size_t layer_bytes() const;
  /// Embeddings, classifier (when not shared) and all RMSNorm gains.
  std::size_t persistent_bytes() const;
  /// Size of the model file.
  std::size_t file_bytes() const;
  /// Element counts of every quantized tensor, in file order.
  std::vector<Index> quantized_numels() const;

  bool operator==(const ModelConfig&) const = default;
};

/// dim=64, hidden=128, 2 layers, 4 heads, 2 kv heads, vocab 512, GS 32.
ModelConfig tiny_config();

/// Quantized weights of one transformer layer. Matrices sharing an input are
/// stored pre-concatenated (wq|wk|wv and w1|w3) so each fused product is one
/// kernel call; the individual matrices are row slices of those.
struct LayerWeights {
  QuantizedTensor wqkv;  // (dim + 2 kv_dim, dim)
  QuantizedTensor wo;    // (dim, dim)
  QuantizedTensor w13;   // (2 hidden_dim, dim)
  QuantizedTensor w2;    // (dim, hidden_dim)

  /// Allocates zeroed storage for the given config.
  static LayerWeights allocate(const ModelConfig& cfg);
  std::size_t bytes() const { return wqkv.bytes() + wo.bytes() + w13.bytes() + w2.bytes(); }
};

/// Row-slice view [row_begin, row_begin + rows) of a quantized matrix.
struct MatrixSlice {
  std::span<const std::int8_t> values;
  std::span<const float> scales;
  Index rows = 0;
  Index cols = 0;
};

MatrixSlice row_slice(const QuantizedTensor& w, Index row_begin, Index rows);

/// Tensors resident for the whole run: embeddings, classifier and RMSNorm gains.
struct PersistentWeights {
  QuantizedTensor embeddings;                // (vocab, dim)
  std::optional<QuantizedTensor> classifier; // (vocab, dim); empty when shared
  RowMatrixXf att_norm;                      // (n_layers, dim)
  RowMatrixXf ffn_norm;                      // (n_layers, dim)
  Eigen::VectorXf final_norm;                // (dim)

  const QuantizedTensor& output_matrix() const { return classifier ? *classifier : embeddings; }
  std::size_t bytes() const;
};

/// Unquantized weights as produced by a trainer or the synthetic generator.
struct FloatLayer {
  RowMatrixXf wq, wk, wv, wo, w1, w2, w3;
  Eigen::VectorXf att_norm, ffn_norm;
};

struct FloatWeights {
  ModelConfig config;
  RowMatrixXf embeddings;
  std::vector<FloatLayer> layers;
  Eigen::VectorXf final_norm;
  std::optional<RowMatrixXf> classifier;

  const RowMatrixXf& output_matrix() const { return classifier ? *classifier : embeddings; }
  /// Throws Errc::export_failed on any shape inconsistency with config.
  void check() const;
};

}  // namespace qlm
