#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "doctest.h"
#include "qlm/error.hpp"
#include "qlm/modelio.hpp"
#include "testutil.hpp"

using namespace qlm;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t closed_form_bytes(const ModelConfig& c) {
  // Hand-expanded for dim 64, hidden 128, 2 layers, kv_dim 32, vocab 512, gs 32.
  const std::size_t header = 256;
  const std::size_t norms = 4 * (2 * 2 + 1) * 64;
  auto q = [](std::size_t numel) { return numel + 4 * numel / 32; };
  const std::size_t layer = q(64 * 64) + 2 * q(32 * 64) + q(64 * 64) + 3 * q(128 * 64);
  const std::size_t tables = 2 * q(512 * 64);
  CHECK(c.layer_bytes() == layer);
  return header + norms + tables + 2 * layer;
}

}  // namespace

TEST_CASE("tiny file size matches closed form") {
  TempDir dir;
  const ModelConfig c = tiny_config();
  const auto path = dir.path / "m.lamf";
  write_model(gen_synthetic(c, 1), path);
  CHECK(fs::file_size(path) == closed_form_bytes(c));
  CHECK(fs::file_size(path) == c.file_bytes());
  CHECK(closed_form_bytes(c) == 158208);
}

TEST_CASE("header encoding") {
  const ModelConfig c = tiny_config();
  const auto h = encode_header(c);
  CHECK(h[0] == 'L');
  CHECK(h[3] == 'F');
  CHECK(h[4] == 1);
  CHECK(h[8] == 64);
  CHECK(h[12] == 128);
  CHECK(h[36] == 32);
  CHECK(h[40] == 0);
  for (std::size_t i = 41; i < h.size(); ++i) CHECK(h[i] == 0);
  CHECK(decode_header(h) == c);
}

TEST_CASE("write then read round trip") {
  TempDir dir;
  for (bool shared : {false, true}) {
    ModelConfig c = tiny_config();
    c.shared_classifier = shared;
    const auto fw = gen_synthetic(c, 2);
    const auto path = dir.path / (shared ? "s.lamf" : "u.lamf");
    write_model(fw, path);
    const ModelFile mf = read_model(path);
    CHECK(mf.config == c);
    const auto pw = quantize_persistent(fw);
    const auto layers = quantize_layers(fw);
    CHECK(mf.persistent.embeddings.values == pw.embeddings.values);
    CHECK(mf.persistent.embeddings.scales == pw.embeddings.scales);
    CHECK(mf.persistent.classifier.has_value() == !shared);
    if (!shared) {
      CHECK(mf.persistent.classifier->values == pw.classifier->values);
      CHECK(mf.persistent.classifier->scales == pw.classifier->scales);
    }
    CHECK(mf.persistent.att_norm == pw.att_norm);
    CHECK(mf.persistent.ffn_norm == pw.ffn_norm);
    CHECK(mf.persistent.final_norm == pw.final_norm);
    const auto loaded = mf.load_all_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      CHECK(loaded[l].wqkv.values == layers[l].wqkv.values);
      CHECK(loaded[l].wqkv.scales == layers[l].wqkv.scales);
      CHECK(loaded[l].wo.values == layers[l].wo.values);
      CHECK(loaded[l].w13.values == layers[l].w13.values);
      CHECK(loaded[l].w13.scales == layers[l].w13.scales);
      CHECK(loaded[l].w2.scales == layers[l].w2.scales);
    }
    CHECK(mf.persistent.bytes() == c.persistent_bytes());
  }
}

TEST_CASE("layer offset table") {
  TempDir dir;
  ModelConfig c = tiny_config();
  c.n_layers = 4;
  write_model(gen_synthetic(c, 3), dir.path / "m.lamf");
  const ModelFile mf = read_model(dir.path / "m.lamf");
  REQUIRE(mf.layer_offsets.size() == 5);
  const std::size_t norms = 4 * static_cast<std::size_t>((2 * c.n_layers + 1) * c.dim);
  const std::size_t emb = static_cast<std::size_t>(c.vocab_size * c.dim) * (1 + 4 / 32.0);
  CHECK(mf.layer_offsets[0] == 256 + norms + emb);
  for (std::size_t l = 0; l < 4; ++l) CHECK(mf.layer_offsets[l + 1] - mf.layer_offsets[l] == c.layer_bytes());
}

TEST_CASE("corrupt files are rejected") {
  TempDir dir;
  const ModelConfig c = tiny_config();
  const auto path = dir.path / "m.lamf";
  write_model(gen_synthetic(c, 4), path);
  auto bytes = slurp(path);

  auto write_bytes = [&](const fs::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto flipped = bytes;
  flipped[1] ^= 0x20;
  write_bytes(dir.path / "magic.lamf", flipped);
  try {
    read_model(dir.path / "magic.lamf");
    FAIL("bad magic accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::format);
  }

  auto version = bytes;
  version[4] = 2;
  write_bytes(dir.path / "version.lamf", version);
  CHECK_THROWS_AS(read_model(dir.path / "version.lamf"), Error);

  auto cut = bytes;
  cut.resize(bytes.size() - 100);
  write_bytes(dir.path / "cut.lamf", cut);
  try {
    read_model(dir.path / "cut.lamf");
    FAIL("truncated file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  try {
    read_model(dir.path / "missing.lamf");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
}

TEST_CASE("export errors on inconsistent weights") {
  auto fw = gen_synthetic(tiny_config(), 5);
  fw.layers[1].wk.resize(3, 64);
  TempDir dir;
  try {
    write_model(fw, dir.path / "bad.lamf");
    FAIL("bad shape exported");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::export_failed);
  }
}

TEST_CASE("synthetic weights are seeded") {
  TempDir dir;
  const ModelConfig c = tiny_config();
  write_model(gen_synthetic(c, 9), dir.path / "a.lamf");
  write_model(gen_synthetic(c, 9), dir.path / "b.lamf");
  write_model(gen_synthetic(c, 10), dir.path / "c.lamf");
  CHECK(slurp(dir.path / "a.lamf") == slurp(dir.path / "b.lamf"));
  CHECK(slurp(dir.path / "a.lamf") != slurp(dir.path / "c.lamf"));
}
