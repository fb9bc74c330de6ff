// qlm: command-line driver for the quantized inference engine, the
// accelerator timing model and the schedule model.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qlm/bench.hpp"
#include "qlm/error.hpp"
#include "qlm/pipesim.hpp"
#include "qlm/quant.hpp"
#include "qlm/selftest.hpp"
#include "qlm/stream.hpp"

namespace {

using namespace qlm;

struct DecodeFlags {
  std::string model;
  std::string tokenizer;
  std::string prompt;
  Index steps = 64;
  std::string mode = "greedy";
  float p = 0.9f;
  float temperature = 1.0f;
  std::uint64_t seed = 0;
  std::string async = "on";
  long inject_us = 0;
  int workers = 1;
  std::string kernel = "reference";
  bool csv = false;
};

void add_model_flags(CLI::App* cmd, DecodeFlags& f, bool needs_tokenizer) {
  cmd->add_option("--model", f.model, "Model file")->required()->check(CLI::ExistingFile);
  auto* tok = cmd->add_option("--tokenizer", f.tokenizer, "Tokenizer file")->check(CLI::ExistingFile);
  if (needs_tokenizer) tok->required();
  cmd->add_option("--workers", f.workers, "Threads for row/head parallelism")->check(CLI::PositiveNumber);
  cmd->add_option("--kernel", f.kernel, "GQMV kernel")->check(CLI::IsMember({"reference", "staged"}));
  cmd->add_option("--async", f.async, "Prefetch the next layer during compute")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--inject-transfer-us", f.inject_us, "Artificial per-layer transfer delay (microseconds)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--csv", f.csv, "Machine-readable output");
}

void add_sampling_flags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--prompt", f.prompt, "Prompt text (UTF-8)");
  cmd->add_option("--steps", f.steps, "Positions to decode, prompt included");
  cmd->add_option("--mode", f.mode, "Sampling mode")->check(CLI::IsMember({"greedy", "topp"}));
  cmd->add_option("--p", f.p, "Top-p mass");
  cmd->add_option("--temperature", f.temperature, "Softmax temperature (0 = greedy)");
  cmd->add_option("--seed", f.seed, "Sampler seed");
}

GenerateOptions generate_options(const DecodeFlags& f) {
  GenerateOptions o;
  o.model = f.model;
  o.tokenizer = f.tokenizer;
  o.prompt = f.prompt;
  o.steps = f.steps;
  o.sampler.mode = f.mode == "topp" ? SampleMode::top_p : SampleMode::greedy;
  o.sampler.p = f.p;
  o.sampler.temperature = f.temperature;
  o.sampler.seed = f.seed;
  o.async = f.async == "on";
  o.inject_transfer = std::chrono::microseconds(f.inject_us);
  o.workers = f.workers;
  o.kernel = f.kernel == "staged" ? Kernel::staged : Kernel::reference;
  return o;
}

const char* kBenchHeader = "steps,tokens,seconds,tok_per_s,gops,matmul,attention,swiglu,rope,rmsnorm,workers,async";

void print_bench(const BenchReport& r, Index steps, bool async, bool csv, std::ostream& out) {
  const auto& f = r.fractions;
  if (csv) {
    out << steps << ',' << r.tokens << ',' << r.seconds << ',' << r.tok_per_s << ',' << r.gops << ',' << f[0] << ','
        << f[1] << ',' << f[2] << ',' << f[3] << ',' << f[4] << ',' << r.workers << ',' << (async ? "on" : "off")
        << '\n';
    return;
  }
  char line[256];
  std::snprintf(line, sizeof line, "steps=%ld tokens=%ld time=%.4fs tok/s=%.3f classifier GOPS=%.3f workers=%d async=%s\n",
                static_cast<long>(steps), static_cast<long>(r.tokens), r.seconds, r.tok_per_s, r.gops, r.workers,
                async ? "on" : "off");
  out << line;
  for (int c = 0; c < kComponents; ++c) {
    std::snprintf(line, sizeof line, "  %-22s %7.3f%%\n", to_string(static_cast<Component>(c)),
                  100.0 * f[static_cast<std::size_t>(c)]);
    out << line;
  }
}

int cmd_generate(const DecodeFlags& f) {
  const GenerateOptions o = generate_options(f);
  const GenerateResult r = run_generate(o, [](std::string_view piece) {
    std::cout << piece;
    std::cout.flush();
  });
  std::cout << '\n';
  if (f.csv) std::cerr << kBenchHeader << '\n';
  print_bench(r.report, f.steps, o.async, f.csv, std::cerr);
  return 0;
}

int cmd_benchmark(const DecodeFlags& f, const std::vector<Index>& step_list, int repeats) {
  if (f.csv) std::cout << kBenchHeader << '\n';
  for (Index steps : step_list) {
    DecodeFlags g = f;
    g.steps = steps;
    GenerateOptions o = generate_options(g);
    o.benchmark = true;
    o.sampler.mode = SampleMode::greedy;
    const GenerateResult r = run_generate(o);
    print_bench(r.report, steps, o.async, f.csv, std::cout);
  }
  const GopsReport g = run_gops_bench(f.model, repeats, f.workers);
  if (f.csv) {
    std::cout << "gqmv_ops,repeats,mean_gops,stddev_gops\n"
              << g.ops << ',' << g.repeats << ',' << g.mean_gops << ',' << g.stddev_gops << '\n';
  } else {
    std::printf("classifier GQMV: ops=%llu repeats=%d mean=%.4f GOPS stddev=%.4f\n",
                static_cast<unsigned long long>(g.ops), g.repeats, g.mean_gops, g.stddev_gops);
  }
  return 0;
}

int cmd_profile(const DecodeFlags& f, std::vector<Index> positions) {
  DecodeFlags g = f;
  Index last = 0;
  for (Index p : positions) last = std::max(last, p);
  g.steps = last + 1;
  GenerateOptions o = generate_options(g);
  o.benchmark = true;
  o.sampler.mode = SampleMode::greedy;
  o.profile_positions = positions;
  const GenerateResult r = run_generate(o);
  if (f.csv) std::cout << "pos,matmul,attention,swiglu,rope,rmsnorm\n";
  for (const auto& [pos, fr] : r.position_fractions) {
    if (f.csv) {
      std::cout << pos;
      for (double x : fr) std::cout << ',' << x;
      std::cout << '\n';
      continue;
    }
    std::printf("pos=%ld\n", static_cast<long>(pos));
    for (int c = 0; c < kComponents; ++c) {
      std::printf("  %-22s %7.3f%%\n", to_string(static_cast<Component>(c)), 100.0 * fr[static_cast<std::size_t>(c)]);
    }
  }
  return 0;
}

void print_sim(const SimReport& r, Index m, Index n, const HwConfig& hw, bool csv) {
  if (csv) {
    std::cout << "m,n,lanes,gs,clock_hz,ddr_bytes_per_cycle,total_cycles,fill_cycles,busy_cycles,stall_cycles,"
                 "drain_cycles,prefetch_cycles,steady_row_cycles,preprocess_busy,dot_busy,accumulate_busy,ops,"
                 "sustained_gops,peak_gops\n";
    std::cout << m << ',' << n << ',' << hw.simd_lanes << ',' << hw.gs << ',' << hw.clock_hz << ','
              << hw.ddr_bytes_per_cycle << ',' << r.total_cycles << ',' << r.fill_cycles << ',' << r.busy_cycles << ','
              << r.stall_cycles << ',' << r.drain_cycles << ',' << r.prefetch_cycles << ',' << r.steady_row_cycles
              << ',' << r.stage_busy[0] << ',' << r.stage_busy[1] << ',' << r.stage_busy[2] << ',' << r.ops << ','
              << r.sustained_gops << ',' << r.peak_gops << '\n';
    return;
  }
  std::printf("GQMV %ld x %ld, %ld lanes, GS=%ld, %.1f MHz, DDR %.4g B/cycle\n", static_cast<long>(m),
              static_cast<long>(n), static_cast<long>(hw.simd_lanes), static_cast<long>(hw.gs), hw.clock_hz / 1e6,
              hw.ddr_bytes_per_cycle);
  std::printf("  total cycles      %llu\n", static_cast<unsigned long long>(r.total_cycles));
  std::printf("  fill / drain      %llu / %llu\n", static_cast<unsigned long long>(r.fill_cycles),
              static_cast<unsigned long long>(r.drain_cycles));
  std::printf("  busy / stall      %llu / %llu\n", static_cast<unsigned long long>(r.busy_cycles),
              static_cast<unsigned long long>(r.stall_cycles));
  std::printf("  steady row cycles %llu\n", static_cast<unsigned long long>(r.steady_row_cycles));
  std::printf("  stage busy        pre %llu  dot %llu  acc %llu\n", static_cast<unsigned long long>(r.stage_busy[0]),
              static_cast<unsigned long long>(r.stage_busy[1]), static_cast<unsigned long long>(r.stage_busy[2]));
  std::printf("  GOPS              sustained %.4f  peak %.4f\n", r.sustained_gops, r.peak_gops);
}

std::vector<double> parse_costs(const std::string& text, Index layers) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.size() == 1) out.assign(static_cast<std::size_t>(layers), out[0]);
  if (static_cast<Index>(out.size()) != layers) {
    throw Error(Errc::argument, "cost list needs 1 or " + std::to_string(layers) + " entries");
  }
  return out;
}

int cmd_schedule_closed_form(Index layers, const std::string& compute, const std::string& transfer, bool csv) {
  const ScheduleCosts c{parse_costs(compute, layers), parse_costs(transfer, layers)};
  const double sync = plan_schedule(c, ScheduleMode::sync).total;
  const double async = plan_schedule(c, ScheduleMode::async).total;
  if (csv) {
    std::cout << "layers,sync_total,async_total,speedup\n" << layers << ',' << sync << ',' << async << ','
              << sync / async << '\n';
  } else {
    std::printf("layers=%ld sync=%.6g async=%.6g speedup=%.4fx\n", static_cast<long>(layers), sync, async, sync / async);
  }
  return 0;
}

int cmd_schedule_live(const DecodeFlags& f, bool csv) {
  if (csv) std::cout << "mode,steps,inject_us,wall_s,predicted_sync_s,predicted_async_s\n";
  for (const bool async : {false, true}) {
    EngineOptions eo;
    eo.model = f.model;
    eo.stream_options = {async, std::chrono::microseconds(f.inject_us)};
    eo.workers = f.workers;
    Engine engine(eo);
    const ModelConfig& cfg = engine.config();
    const Index steps = std::min(f.steps, cfg.seq_len);
    int token = 1;
    for (Index pos = 0; pos < steps; ++pos) {
      const auto logits = engine.transformer().forward(token, pos);
      token = argmax(logits);
    }
    const auto end = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(end - engine.streamer()->started()).count();
    const ScheduleCosts c = costs_from_trace(engine.streamer()->trace(), end);
    const double ps = plan_schedule(c, ScheduleMode::sync).total;
    const double pa = plan_schedule(c, ScheduleMode::async).total;
    if (csv) {
      std::cout << (async ? "async" : "sync") << ',' << steps << ',' << f.inject_us << ',' << wall << ',' << ps << ','
                << pa << '\n';
    } else {
      std::printf("%-5s steps=%ld inject=%ldus wall=%.4fs  model: sync=%.4fs async=%.4fs\n", async ? "async" : "sync",
                  static_cast<long>(steps), f.inject_us, wall, ps, pa);
    }
  }
  return 0;
}

int cmd_quantize_stats(const std::string& input, Index count, Index gs, std::uint64_t seed, bool csv) {
  std::vector<float> values;
  if (!input.empty()) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + input);
    float v;
    while (in.read(reinterpret_cast<char*>(&v), sizeof v)) values.push_back(v);
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist;
    values.resize(static_cast<std::size_t>(count));
    for (float& v : values) v = dist(rng);
  }
  const QuantizedTensor q = quantize(std::span<const float>(values), {gs});
  const ErrorStats s = error_stats(values, q);
  if (csv) {
    std::cout << "count,gs,max,min,mean,std,mean_rel_pct,std_rel_pct\n"
              << values.size() << ',' << gs << ',' << s.max << ',' << s.min << ',' << s.mean << ',' << s.std << ','
              << s.mean_rel_pct << ',' << s.std_rel_pct << '\n';
  } else {
    std::printf("values=%zu GS=%ld\n  abs error: max %.6g  min %.6g  mean %.6g  std %.6g\n"
                "  rel error: mean %.4f%%  std %.4f%%\n",
                values.size(), static_cast<long>(gs), s.max, s.min, s.mean, s.std, s.mean_rel_pct, s.std_rel_pct);
  }
  return 0;
}

int cmd_selftest() {
  const SelfTestResult r = run_selftest();
  for (const auto& line : r.lines) std::cout << line << '\n';
  std::cout << r.passed << " passed, " << r.failed << " failed\n";
  return r.failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-wise W8A8 Llama-architecture inference engine and GQMV accelerator model"};
  app.require_subcommand(1);

  DecodeFlags f;
  auto* generate = app.add_subcommand("generate", "Generate text");
  add_model_flags(generate, f, true);
  add_sampling_flags(generate, f);

  auto* benchmark = app.add_subcommand("benchmark", "tok/s over fixed step counts (EOS suppressed, greedy) and GOPS");
  add_model_flags(benchmark, f, true);
  add_sampling_flags(benchmark, f);
  std::vector<Index> step_list{64, 128, 256};
  int repeats = 20;
  benchmark->add_option("--step-list", step_list, "Step counts to run")->delimiter(',');
  benchmark->add_option("--repeats", repeats, "Classifier GQMV repetitions for GOPS");

  auto* profile = app.add_subcommand("profile", "Per-component runtime fractions at chosen positions");
  add_model_flags(profile, f, true);
  add_sampling_flags(profile, f);
  std::vector<Index> positions{63, 127, 255};
  profile->add_option("--positions", positions, "Positions to report")->delimiter(',');

  auto* simulate = app.add_subcommand("simulate", "Cycle model of the pipelined GQMV accelerator");
  Index m = 32000, n = 2048;
  HwConfig hw;
  double clock_mhz = 205.0;
  double calibrate = 0;
  bool sim_csv = false;
  simulate->add_option("-m,--rows", m, "Matrix rows");
  simulate->add_option("-n,--cols", n, "Matrix columns");
  simulate->add_option("--lanes", hw.simd_lanes, "SIMD lanes");
  simulate->add_option("--gs", hw.gs, "Group size");
  simulate->add_option("--clock-mhz", clock_mhz, "Clock (MHz)");
  simulate->add_option("--ddr", hw.ddr_bytes_per_cycle, "DDR bytes per cycle (default unlimited)");
  simulate->add_option("--depth", hw.stream_depth, "FIFO depth in rows");
  simulate->add_option("--latency", hw.stage_latency, "Fixed latency per stage");
  simulate->add_option("--calibrate-gops", calibrate, "Solve for the DDR rate reaching this GOPS");
  simulate->add_flag("--csv", sim_csv, "CSV output");

  auto* schedule = app.add_subcommand("schedule", "Sync vs async layer-transfer schedule");
  Index layers = 22;
  std::string compute = "10", transfer = "8";
  bool sched_csv = false;
  std::string sched_model;
  schedule->add_option("--layers", layers, "Layer count (closed form)");
  schedule->add_option("--compute", compute, "Per-layer compute cost, one value or a comma list");
  schedule->add_option("--transfer", transfer, "Per-layer transfer cost, one value or a comma list");
  schedule->add_option("--model", sched_model, "Measure a live decode instead")->check(CLI::ExistingFile);
  schedule->add_option("--steps", f.steps, "Positions for the live decode");
  schedule->add_option("--inject-transfer-us", f.inject_us, "Per-layer transfer delay for the live decode");
  schedule->add_option("--workers", f.workers, "Threads");
  schedule->add_flag("--csv", sched_csv, "CSV output");

  auto* qstats = app.add_subcommand("quantize-stats", "Group-wise quantization error statistics");
  std::string input;
  Index count = 1000000, gs = 256;
  std::uint64_t qseed = 0;
  bool q_csv = false;
  qstats->add_option("--input", input, "Raw little-endian f32 file (default: Gaussian samples)");
  qstats->add_option("--count", count, "Gaussian sample count");
  qstats->add_option("--gs", gs, "Group size");
  qstats->add_option("--seed", qseed, "Sample seed");
  qstats->add_flag("--csv", q_csv, "CSV output");

  auto* selftest = app.add_subcommand("selftest", "Run built-in oracle checks");

  auto* synth = app.add_subcommand("synth", "Write a synthetic model and tokenizer");
  ModelConfig cfg = tiny_config();
  std::string out_model = "tiny.lamf", out_tok = "tiny.tok";
  std::uint64_t synth_seed = 42;
  synth->add_option("--out-model", out_model, "Model path");
  synth->add_option("--out-tokenizer", out_tok, "Tokenizer path");
  synth->add_option("--seed", synth_seed, "Weight seed");
  synth->add_option("--dim", cfg.dim);
  synth->add_option("--hidden-dim", cfg.hidden_dim);
  synth->add_option("--layers", cfg.n_layers);
  synth->add_option("--heads", cfg.n_heads);
  synth->add_option("--kv-heads", cfg.n_kv_heads);
  synth->add_option("--vocab", cfg.vocab_size);
  synth->add_option("--seq-len", cfg.seq_len);
  synth->add_option("--gs", cfg.gs);
  synth->add_flag("--shared-classifier", cfg.shared_classifier);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(f);
    if (*benchmark) return cmd_benchmark(f, step_list, repeats);
    if (*profile) return cmd_profile(f, positions);
    if (*simulate) {
      hw.clock_hz = clock_mhz * 1e6;
      if (calibrate > 0) {
        const Calibration c = calibrate_ddr(calibrate, m, n, hw);
        hw.ddr_bytes_per_cycle = c.ddr_bytes_per_cycle;
        if (!sim_csv) std::printf("calibrated DDR rate: %.4f bytes/cycle\n", c.ddr_bytes_per_cycle);
      }
      print_sim(simulate_gqmv(m, n, hw), m, n, hw, sim_csv);
      return 0;
    }
    if (*schedule) {
      if (!sched_model.empty()) {
        f.model = sched_model;
        return cmd_schedule_live(f, sched_csv);
      }
      return cmd_schedule_closed_form(layers, compute, transfer, sched_csv);
    }
    if (*qstats) return cmd_quantize_stats(input, count, gs, qseed, q_csv);
    if (*selftest) return cmd_selftest();
    if (*synth) {
      write_synthetic(cfg, synth_seed, out_model, out_tok);
      std::printf("wrote %s (%zu bytes) and %s\n", out_model.c_str(), cfg.file_bytes(), out_tok.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "qlm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
