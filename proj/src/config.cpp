#include "qlm/config.hpp"

#include <string>

#include "qlm/error.hpp"

namespace qlm {

void ModelConfig::check() const {
  auto fail = [](const std::string& what) { throw Error(Errc::invalid_input, "model config: " + what); };
  if (dim < 1 || hidden_dim < 1 || n_layers < 1 || n_heads < 1 || n_kv_heads < 1) fail("dimensions must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (gs < 1) fail("gs must be >= 1");
  if (dim % n_heads != 0) fail("dim not divisible by n_heads");
  if (n_heads % n_kv_heads != 0) fail("n_heads not divisible by n_kv_heads");
  if (head_dim() % 2 != 0) fail("head_dim must be even for rotary embedding");
  if (dim % gs != 0 || hidden_dim % gs != 0 || kv_dim() % gs != 0) fail("dim, hidden_dim, kv_dim must divide by gs");
}

std::vector<Index> ModelConfig::quantized_numels() const {
  std::vector<Index> numels;
  numels.push_back(vocab_size * dim);
  for (Index l = 0; l < n_layers; ++l) {
    numels.push_back(dim * dim);         // wq
    numels.push_back(kv_dim() * dim);    // wk
    numels.push_back(kv_dim() * dim);    // wv
    numels.push_back(dim * dim);         // wo
    numels.push_back(hidden_dim * dim);  // w1
    numels.push_back(dim * hidden_dim);  // w2
    numels.push_back(hidden_dim * dim);  // w3
  }
  if (!shared_classifier) numels.push_back(vocab_size * dim);
  return numels;
}

namespace {

std::size_t qbytes(Index numel, Index gs) {
  return static_cast<std::size_t>(numel) + sizeof(float) * static_cast<std::size_t>(numel / gs);
}

}  // namespace

std::size_t ModelConfig::layer_bytes() const {
  const Index kv = kv_dim();
  return qbytes(dim * dim, gs) + 2 * qbytes(kv * dim, gs) + qbytes(dim * dim, gs) + 3 * qbytes(hidden_dim * dim, gs);
}

std::size_t ModelConfig::persistent_bytes() const {
  const std::size_t norms = sizeof(float) * static_cast<std::size_t>((2 * n_layers + 1) * dim);
  const std::size_t table = qbytes(vocab_size * dim, gs);
  return norms + table * (shared_classifier ? 1 : 2);
}

std::size_t ModelConfig::file_bytes() const {
  constexpr std::size_t header = 256;
  return header + persistent_bytes() + static_cast<std::size_t>(n_layers) * layer_bytes();
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 64;
  c.hidden_dim = 128;
  c.n_layers = 2;
  c.n_heads = 4;
  c.n_kv_heads = 2;
  c.vocab_size = 512;
  c.seq_len = 256;
  c.gs = 32;
  c.shared_classifier = false;
  return c;
}

namespace {

QuantizedTensor zeros(Index rows, Index cols, Index gs) {
  QuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  q.spec = {gs};
  q.values = VectorXi8::Zero(rows * cols);
  q.scales = Eigen::VectorXf::Ones(rows * cols / gs);
  return q;
}

}  // namespace

LayerWeights LayerWeights::allocate(const ModelConfig& cfg) {
  LayerWeights w;
  w.wqkv = zeros(cfg.dim + 2 * cfg.kv_dim(), cfg.dim, cfg.gs);
  w.wo = zeros(cfg.dim, cfg.dim, cfg.gs);
  w.w13 = zeros(2 * cfg.hidden_dim, cfg.dim, cfg.gs);
  w.w2 = zeros(cfg.dim, cfg.hidden_dim, cfg.gs);
  return w;
}

MatrixSlice row_slice(const QuantizedTensor& w, Index row_begin, Index rows) {
  if (row_begin < 0 || row_begin + rows > w.rows) throw Error(Errc::invalid_shape, "row slice out of range");
  const Index groups = w.cols / w.spec.group_size;
  return {w.value_span().subspan(static_cast<std::size_t>(row_begin * w.cols), static_cast<std::size_t>(rows * w.cols)),
          w.scale_span().subspan(static_cast<std::size_t>(row_begin * groups), static_cast<std::size_t>(rows * groups)),
          rows, w.cols};
}

std::size_t PersistentWeights::bytes() const {
  std::size_t total = embeddings.bytes();
  if (classifier) total += classifier->bytes();
  total += sizeof(float) * static_cast<std::size_t>(att_norm.size() + ffn_norm.size() + final_norm.size());
  return total;
}

void FloatWeights::check() const {
  const ModelConfig& c = config;
  auto expect = [](const RowMatrixXf& m, Index rows, Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(Errc::export_failed, std::string(name) + " has shape (" + std::to_string(m.rows()) + ", " +
                                           std::to_string(m.cols()) + "), expected (" + std::to_string(rows) + ", " +
                                           std::to_string(cols) + ")");
    }
  };
  auto expect_vec = [&](const Eigen::VectorXf& v, const char* name) {
    if (v.size() != c.dim) throw Error(Errc::export_failed, std::string(name) + " length != dim");
  };
  try {
    c.check();
  } catch (const Error& e) {
    throw Error(Errc::export_failed, e.what());
  }
  expect(embeddings, c.vocab_size, c.dim, "embeddings");
  if (static_cast<Index>(layers.size()) != c.n_layers) throw Error(Errc::export_failed, "layer count mismatch");
  for (const FloatLayer& l : layers) {
    expect(l.wq, c.dim, c.dim, "wq");
    expect(l.wk, c.kv_dim(), c.dim, "wk");
    expect(l.wv, c.kv_dim(), c.dim, "wv");
    expect(l.wo, c.dim, c.dim, "wo");
    expect(l.w1, c.hidden_dim, c.dim, "w1");
    expect(l.w2, c.dim, c.hidden_dim, "w2");
    expect(l.w3, c.hidden_dim, c.dim, "w3");
    expect_vec(l.att_norm, "att_norm");
    expect_vec(l.ffn_norm, "ffn_norm");
  }
  expect_vec(final_norm, "final_norm");
  if (c.shared_classifier == classifier.has_value()) {
    throw Error(Errc::export_failed, "classifier presence disagrees with shared_classifier flag");
  }
  if (classifier) expect(*classifier, c.vocab_size, c.dim, "classifier");
}

}  // namespace qlm
