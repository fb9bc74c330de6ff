#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace qlm {

enum class SampleMode { greedy, top_p };

struct SamplerConfig {
  SampleMode mode = SampleMode::greedy;
  float p = 0.9f;
  float temperature = 1.0f;
  std::uint64_t seed = 0;
};

/// Index of the largest logit, lowest index on ties.
int argmax(std::span<const float> logits);

/// Sorted (descending) probabilities kept by nucleus truncation: the
/// shortest prefix whose mass reaches p. Returned pairs are (id, prob),
/// renormalized over the kept set.
std::vector<std::pair<int, float>> nucleus(std::span<const float> logits, float p, float temperature);

/// Owns its RNG; one per decode stream.
class Sampler {
 public:
  explicit Sampler(SamplerConfig cfg);

  int sample(std::span<const float> logits);
  const SamplerConfig& config() const { return cfg_; }

 private:
  SamplerConfig cfg_;
  std::mt19937_64 rng_;
};

}  // namespace qlm
