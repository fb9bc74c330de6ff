#include "qlm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlm/error.hpp"

namespace qlm {

namespace {

void check_logits(std::span<const float> logits) {
  if (logits.empty()) throw Error(Errc::invalid_distribution, "empty logits");
  bool any = false;
  for (float v : logits) {
    if (std::isnan(v) || v == std::numeric_limits<float>::infinity()) {
      throw Error(Errc::invalid_distribution, "logits contain NaN or +inf");
    }
    any = any || v != -std::numeric_limits<float>::infinity();
  }
  if (!any) throw Error(Errc::invalid_distribution, "all logits are -inf");
}

}  // namespace

int argmax(std::span<const float> logits) {
  check_logits(logits);
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<std::pair<int, float>> nucleus(std::span<const float> logits, float p, float temperature) {
  check_logits(logits);
  if (!(p > 0.0f && p <= 1.0f)) throw Error(Errc::argument, "top-p must be in (0, 1]");
  if (!(temperature > 0.0f)) throw Error(Errc::argument, "nucleus needs a positive temperature");

  const float max = *std::max_element(logits.begin(), logits.end());
  std::vector<std::pair<int, float>> probs(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const float e = std::exp((logits[i] - max) / temperature);
    probs[i] = {static_cast<int>(i), e};
    total += e;
  }
  for (auto& [id, pr] : probs) pr = static_cast<float>(pr / total);
  std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  double mass = 0;
  std::size_t keep = 0;
  while (keep < probs.size()) {
    mass += probs[keep].second;
    ++keep;
    if (mass >= p) break;
  }
  probs.resize(keep);
  for (auto& [id, pr] : probs) pr = static_cast<float>(pr / mass);
  return probs;
}

Sampler::Sampler(SamplerConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (cfg_.mode == SampleMode::top_p && !(cfg_.p > 0.0f && cfg_.p <= 1.0f)) {
    throw Error(Errc::argument, "top-p must be in (0, 1]");
  }
  if (!(cfg_.temperature >= 0.0f)) throw Error(Errc::argument, "temperature must be >= 0");
}

int Sampler::sample(std::span<const float> logits) {
  if (cfg_.mode == SampleMode::greedy || cfg_.temperature == 0.0f) return argmax(logits);
  const auto kept = nucleus(logits, cfg_.p, cfg_.temperature);
  const float u = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng_);
  float cdf = 0;
  for (const auto& [id, pr] : kept) {
    cdf += pr;
    if (u < cdf) return id;
  }
  return kept.back().first;
}

}  // namespace qlm
