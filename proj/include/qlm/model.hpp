#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

#include "qlm/config.hpp"
#include "qlm/workers.hpp"

namespace qlm {

/// Per-layer key/value history. Positions are appended in order; a position
/// is written exactly once between resets.
class KVCache {
 public:
  KVCache() = default;
  explicit KVCache(const ModelConfig& cfg);

  void write(Index layer, Index pos, std::span<const float> key, std::span<const float> value);
  void reset();

  /// Number of positions written for `layer` (highest written position + 1).
  Index filled(Index layer) const { return filled_[static_cast<std::size_t>(layer)]; }

  auto key(Index layer, Index pos) const { return keys_[static_cast<std::size_t>(layer)].row(pos); }
  auto value(Index layer, Index pos) const { return values_[static_cast<std::size_t>(layer)].row(pos); }

 private:
  std::vector<RowMatrixXf> keys_;    // n_layers x (seq_len, kv_dim)
  std::vector<RowMatrixXf> values_;
  std::vector<Index> filled_;
};

/// Grouped-query attention of q (dim) against positions 0..pos of `layer`.
/// `scores` is scratch of shape (n_heads, seq_len). Heads are independent and
/// may be spread over `workers`.
void attention(std::span<const float> q, const KVCache& cache, Index layer, Index pos, const ModelConfig& cfg,
               std::span<float> out, RowMatrixXf& scores, Workers* workers = nullptr);

/// Supplies layer weights to the forward pass. acquire() may block until the
/// layer is available; every acquire is paired with a release once the
/// layer's kernels are done.
class LayerSource {
 public:
  virtual ~LayerSource() = default;
  virtual const LayerWeights& acquire(Index layer) = 0;
  virtual void release(Index layer) = 0;
};

/// All layers held in memory.
class ResidentLayers final : public LayerSource {
 public:
  explicit ResidentLayers(std::vector<LayerWeights> layers) : layers_(std::move(layers)) {}
  const LayerWeights& acquire(Index layer) override { return layers_.at(static_cast<std::size_t>(layer)); }
  void release(Index) override {}
  std::size_t bytes() const;

 private:
  std::vector<LayerWeights> layers_;
};

enum class Component : int { matmul = 0, attention, swiglu, rope, rmsnorm };
inline constexpr int kComponents = 5;
const char* to_string(Component c);

/// Inclusive wall-clock time per forward-pass component, plus kernel op
/// counts for GOPS reporting.
struct Profile {
  std::array<double, kComponents> seconds{};
  std::uint64_t kernel_ops = 0;
  double kernel_seconds = 0;
  std::uint64_t classifier_ops = 0;
  double classifier_seconds = 0;

  std::array<double, kComponents> fractions() const;
  double total() const;
  void clear() { *this = Profile{}; }
};

enum class Kernel { reference, staged };

struct RunState {
  Eigen::VectorXf x;           // residual stream (dim)
  Eigen::VectorXf xb;          // normalized activations (dim)
  VectorXi8 xq;                // quantized activations over dim
  Eigen::VectorXf xs;
  VectorXi8 hq;                // quantized activations over hidden_dim
  Eigen::VectorXf hs;
  Eigen::VectorXf qkv;         // fused projection output (dim + 2 kv_dim)
  Eigen::VectorXf att_buffer;  // (dim)
  Eigen::VectorXf proj;        // Wo / W2 output (dim)
  Eigen::VectorXf ffn_buffer;  // fused W1|W3 output (2 hidden_dim)
  Eigen::VectorXf hb;          // SwiGLU output (hidden_dim)
  Eigen::VectorXf logits;      // (vocab_size)
  RowMatrixXf scores;          // (n_heads, seq_len)

  explicit RunState(const ModelConfig& cfg);
};

/// The W8A8 forward pass. Every matrix product goes through the GQMV kernel
/// with activations re-quantized right before the call.
class Transformer {
 public:
  Transformer(const ModelConfig& cfg, const PersistentWeights& weights, LayerSource& layers,
              Workers* workers = nullptr, Kernel kernel = Kernel::reference);

  /// Logits for `token` at `pos`; the cache must hold positions 0..pos-1.
  std::span<const float> forward(Index token, Index pos);

  /// Classifier product alone on the current normalized activations; used
  /// by the GOPS benchmark.
  void classifier_only();

  void reset();

  const ModelConfig& config() const { return cfg_; }
  const KVCache& cache() const { return cache_; }
  const RunState& state() const { return state_; }
  Profile& profile() { return profile_; }
  const Profile& profile() const { return profile_; }

 private:
  void matvec(const QuantizedTensor& w, const VectorXi8& xq, const Eigen::VectorXf& xs, Eigen::VectorXf& out);

  ModelConfig cfg_;
  const PersistentWeights& weights_;
  LayerSource& layers_;
  Workers* workers_;
  Kernel kernel_;
  RunState state_;
  KVCache cache_;
  Profile profile_;
};

}  // namespace qlm
