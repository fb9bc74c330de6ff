#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qlm/model.hpp"
#include "qlm/modelio.hpp"
#include "qlm/sampler.hpp"
#include "qlm/stream.hpp"
#include "qlm/tokenizer.hpp"

namespace qlm {

struct EngineOptions {
  std::filesystem::path model;
  bool stream = true;  // stream layers through two slots instead of loading all
  StreamOptions stream_options;
  int workers = 1;
  Kernel kernel = Kernel::reference;
};

/// A loaded model ready to decode: file, layer source, workers and forward pass.
class Engine {
 public:
  explicit Engine(const EngineOptions& options);

  Transformer& transformer() { return *transformer_; }
  const ModelConfig& config() const { return file_.config; }
  const ModelFile& file() const { return file_; }
  /// Null when layers are fully resident.
  LayerStreamer* streamer() { return streamer_.get(); }
  int workers() const { return workers_.size(); }
  std::size_t resident_weight_bytes() const;

 private:
  ModelFile file_;
  Workers workers_;
  std::unique_ptr<LayerStreamer> streamer_;
  std::unique_ptr<ResidentLayers> resident_;
  std::unique_ptr<Transformer> transformer_;
};

struct BenchReport {
  Index tokens = 0;
  double seconds = 0;
  double tok_per_s = 0;
  double gops = 0;  // classifier GQMV ops over classifier runtime
  std::array<double, kComponents> fractions{};
  int workers = 1;
};

struct GenerateOptions {
  std::filesystem::path model;
  std::filesystem::path tokenizer;
  std::string prompt;
  Index steps = 64;
  SamplerConfig sampler;
  /// Benchmark mode never samples EOS, so exactly `steps` positions decode.
  bool benchmark = false;
  bool async = true;
  std::chrono::microseconds inject_transfer{0};
  int workers = 1;
  Kernel kernel = Kernel::reference;
  bool keep_logits = false;
  std::vector<Index> profile_positions;
};

struct GenerateResult {
  std::string text;
  std::vector<int> tokens;  // prompt followed by generated tokens
  BenchReport report;
  std::vector<Eigen::VectorXf> logits;  // per position, when keep_logits
  std::map<Index, std::array<double, kComponents>> position_fractions;
};

/// Decodes `steps` positions: prompt tokens are forced, the rest sampled.
/// `on_text` receives each generated piece as it is produced.
GenerateResult run_generate(const GenerateOptions& options,
                            const std::function<void(std::string_view)>& on_text = {});

struct GopsReport {
  std::uint64_t ops = 0;  // 2 · vocab_size · dim
  int repeats = 0;
  double mean_gops = 0;
  double stddev_gops = 0;
};

/// Times the classifier GQMV alone `repeats` times.
GopsReport run_gops_bench(const std::filesystem::path& model, int repeats, int workers = 1);

/// Writes a synthetic model and matching tokenizer.
void write_synthetic(const ModelConfig& cfg, std::uint64_t seed, const std::filesystem::path& model,
                     const std::filesystem::path& tokenizer);

}  // namespace qlm
