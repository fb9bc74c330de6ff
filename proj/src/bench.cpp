#include "qlm/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlm/error.hpp"

namespace qlm {

using Clock = std::chrono::steady_clock;

Engine::Engine(const EngineOptions& options) : file_(read_model(options.model)), workers_(options.workers) {
  LayerSource* source = nullptr;
  if (options.stream) {
    streamer_ = std::make_unique<LayerStreamer>(file_, options.stream_options);
    source = streamer_.get();
  } else {
    resident_ = std::make_unique<ResidentLayers>(file_.load_all_layers());
    source = resident_.get();
  }
  transformer_ = std::make_unique<Transformer>(file_.config, file_.persistent, *source,
                                               workers_.size() > 1 ? &workers_ : nullptr, options.kernel);
}

std::size_t Engine::resident_weight_bytes() const {
  if (streamer_) return streamer_->resident_weight_bytes();
  return file_.persistent.bytes() + resident_->bytes();
}

GenerateResult run_generate(const GenerateOptions& options, const std::function<void(std::string_view)>& on_text) {
  const Vocabulary vocab = Vocabulary::load(options.tokenizer);
  EngineOptions eo;
  eo.model = options.model;
  eo.stream_options = {options.async, options.inject_transfer};
  eo.workers = options.workers;
  eo.kernel = options.kernel;
  Engine engine(eo);
  const ModelConfig& cfg = engine.config();
  if (options.steps < 1 || options.steps > cfg.seq_len) {
    throw Error(Errc::argument, "steps must be in [1, seq_len=" + std::to_string(cfg.seq_len) + "], got " +
                                    std::to_string(options.steps));
  }
  if (vocab.size() != cfg.vocab_size) {
    throw Error(Errc::invalid_input, "tokenizer has " + std::to_string(vocab.size()) + " tokens, model expects " +
                                         std::to_string(cfg.vocab_size));
  }

  GenerateResult result;
  std::vector<int> prompt = vocab.encode(options.prompt, true);
  Sampler sampler(options.sampler);
  Transformer& model = engine.transformer();
  model.profile().clear();

  std::vector<float> masked(static_cast<std::size_t>(cfg.vocab_size));
  result.tokens.push_back(prompt[0]);
  int token = prompt[0];
  Index pos = 0;
  const auto start = Clock::now();
  while (pos < options.steps) {
    const bool profiled = std::find(options.profile_positions.begin(), options.profile_positions.end(), pos) !=
                          options.profile_positions.end();
    const Profile before = model.profile();
    const auto logits = model.forward(token, pos);
    if (profiled) {
      Profile step;
      for (int c = 0; c < kComponents; ++c) {
        step.seconds[static_cast<std::size_t>(c)] =
            model.profile().seconds[static_cast<std::size_t>(c)] - before.seconds[static_cast<std::size_t>(c)];
      }
      result.position_fractions[pos] = step.fractions();
    }
    if (options.keep_logits) result.logits.emplace_back(Eigen::Map<const Eigen::VectorXf>(logits.data(), cfg.vocab_size));

    int next;
    if (static_cast<std::size_t>(pos) + 1 < prompt.size()) {
      next = prompt[static_cast<std::size_t>(pos) + 1];
    } else if (options.benchmark) {
      std::copy(logits.begin(), logits.end(), masked.begin());
      masked[Vocabulary::kEos] = -std::numeric_limits<float>::infinity();
      next = sampler.sample(masked);
    } else {
      next = sampler.sample(logits);
    }
    ++pos;
    if (!options.benchmark && next == Vocabulary::kEos) break;
    result.tokens.push_back(next);
    const std::string piece = vocab.decode_token(next);
    result.text += piece;
    if (on_text) on_text(piece);
    token = next;
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();

  const Profile& prof = model.profile();
  result.report.tokens = pos;
  result.report.seconds = seconds;
  result.report.tok_per_s = seconds > 0 ? static_cast<double>(pos) / seconds : 0;
  result.report.gops =
      prof.classifier_seconds > 0 ? static_cast<double>(prof.classifier_ops) / prof.classifier_seconds / 1e9 : 0;
  result.report.fractions = prof.fractions();
  result.report.workers = engine.workers();
  return result;
}

GopsReport run_gops_bench(const std::filesystem::path& model, int repeats, int workers) {
  if (repeats < 1) throw Error(Errc::argument, "repeats must be >= 1");
  EngineOptions eo;
  eo.model = model;
  eo.stream = false;
  eo.workers = workers;
  Engine engine(eo);
  Transformer& t = engine.transformer();
  // One full step leaves realistic quantized activations in place.
  t.forward(Vocabulary::kBos, 0);
  t.classifier_only();  // untimed warm-up

  GopsReport r;
  r.ops = 2ull * static_cast<std::uint64_t>(engine.config().vocab_size) * static_cast<std::uint64_t>(engine.config().dim);
  r.repeats = repeats;
  std::vector<double> gops;
  for (int i = 0; i < repeats; ++i) {
    const auto start = Clock::now();
    t.classifier_only();
    const double s = std::chrono::duration<double>(Clock::now() - start).count();
    gops.push_back(static_cast<double>(r.ops) / s / 1e9);
  }
  double mean = 0;
  for (double g : gops) mean += g;
  mean /= static_cast<double>(gops.size());
  double var = 0;
  for (double g : gops) var += (g - mean) * (g - mean);
  r.mean_gops = mean;
  r.stddev_gops = std::sqrt(var / static_cast<double>(gops.size()));
  return r;
}

void write_synthetic(const ModelConfig& cfg, std::uint64_t seed, const std::filesystem::path& model,
                     const std::filesystem::path& tokenizer) {
  write_model(gen_synthetic(cfg, seed), model);
  Vocabulary::synthetic(static_cast<int>(cfg.vocab_size)).save(tokenizer);
}

}  // namespace qlm
