#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "qlm/config.hpp"

namespace qlm {

// Model file layout (little-endian, no padding between sections):
//
//   header      256 bytes: "LAMF", u32 version, i32 dim, hidden_dim,
//               n_layers, n_heads, n_kv_heads, vocab_size, seq_len, gs,
//               u8 shared_classifier, zero fill
//   f32         att_norm[n_layers][dim], ffn_norm[n_layers][dim], final_norm[dim]
//   quantized   embeddings; per layer wq wk wv wo w1 w2 w3; classifier
//               (omitted when shared), each as i8 values[numel] then
//               f32 scales[numel / gs]
inline constexpr std::array<char, 4> kModelMagic{'L', 'A', 'M', 'F'};
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::size_t kHeaderBytes = 256;

std::array<std::uint8_t, kHeaderBytes> encode_header(const ModelConfig& cfg);
/// Throws Errc::format on bad magic, version or config.
ModelConfig decode_header(std::span<const std::uint8_t> bytes);

/// Quantizes and writes `weights`. Output is a deterministic function of the
/// input weights.
void write_model(const FloatWeights& weights, const std::filesystem::path& path);

/// An opened model: header, persistent tensors and the byte offset of every
/// layer's quantized block, so layers can be loaded independently.
struct ModelFile {
  std::filesystem::path path;
  ModelConfig config;
  PersistentWeights persistent;
  std::vector<std::uint64_t> layer_offsets;  // n_layers + 1 entries

  /// Reads layer `layer` from `in` into preallocated `out`. Throws Errc::io
  /// naming the layer on a short read.
  void load_layer(Index layer, std::istream& in, LayerWeights& out) const;
  LayerWeights load_layer(Index layer) const;
  std::vector<LayerWeights> load_all_layers() const;
};

ModelFile read_model(const std::filesystem::path& path);

/// Seeded Gaussian weights scaled by 1/sqrt(fan_in). Same seed and config give
/// bit-identical weights.
FloatWeights gen_synthetic(const ModelConfig& cfg, std::uint64_t seed);

/// Quantizes FP32 weights into the in-memory forms used by the engine,
/// without a round trip through a file.
PersistentWeights quantize_persistent(const FloatWeights& weights);
std::vector<LayerWeights> quantize_layers(const FloatWeights& weights);

}  // namespace qlm
