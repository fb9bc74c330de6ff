#include "qlm/modelio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "qlm/error.hpp"

namespace qlm {

static_assert(std::endian::native == std::endian::little, "model files are little-endian; big-endian hosts need byte swapping");

namespace {

void put_u32(std::uint8_t* dst, std::uint32_t v) { std::memcpy(dst, &v, 4); }
void put_i32(std::uint8_t* dst, Index v) {
  const auto x = static_cast<std::int32_t>(v);
  std::memcpy(dst, &x, 4);
}
std::uint32_t get_u32(const std::uint8_t* src) {
  std::uint32_t v;
  std::memcpy(&v, src, 4);
  return v;
}
std::int32_t get_i32(const std::uint8_t* src) {
  std::int32_t v;
  std::memcpy(&v, src, 4);
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error(Errc::io, "write failed on " + path_.string());
  }

  template <typename Derived>
  void floats(const Eigen::DenseBase<Derived>& m) {
    const RowMatrixXf plain = m.derived().template cast<float>();
    bytes(plain.data(), sizeof(float) * static_cast<std::size_t>(plain.size()));
  }

  void quantized(const RowMatrixXf& m, Index gs) {
    const QuantizedTensor q = quantize(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())), {gs},
                                       m.rows(), m.cols());
    bytes(q.values.data(), static_cast<std::size_t>(q.values.size()));
    bytes(q.scales.data(), sizeof(float) * static_cast<std::size_t>(q.scales.size()));
  }

  void close() {
    out_.close();
    if (!out_) throw Error(Errc::io, "close failed on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void read_exact(std::istream& in, void* dst, std::size_t n, std::uint64_t offset, const std::string& what) {
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!in || static_cast<std::size_t>(in.gcount()) != n) {
    in.clear();
    throw Error(Errc::io, "short read of " + what + " at offset " + std::to_string(offset));
  }
}

// Reads one tensor's values and scales into the given row range of `dst`.
std::uint64_t read_rows(std::istream& in, std::uint64_t offset, QuantizedTensor& dst, Index row_begin, Index rows,
                        const std::string& what) {
  const Index groups = dst.cols / dst.spec.group_size;
  const auto nvals = static_cast<std::size_t>(rows * dst.cols);
  const auto nscales = static_cast<std::size_t>(rows * groups);
  read_exact(in, dst.values.data() + row_begin * dst.cols, nvals, offset, what);
  offset += nvals;
  read_exact(in, dst.scales.data() + row_begin * groups, sizeof(float) * nscales, offset, what + " scales");
  return offset + sizeof(float) * nscales;
}

QuantizedTensor allocate(Index rows, Index cols, Index gs) {
  QuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  q.spec = {gs};
  q.values.resize(rows * cols);
  q.scales.resize(rows * cols / gs);
  return q;
}

}  // namespace

std::array<std::uint8_t, kHeaderBytes> encode_header(const ModelConfig& cfg) {
  std::array<std::uint8_t, kHeaderBytes> h{};
  std::memcpy(h.data(), kModelMagic.data(), 4);
  put_u32(h.data() + 4, kModelVersion);
  const Index fields[] = {cfg.dim,        cfg.hidden_dim, cfg.n_layers, cfg.n_heads,
                          cfg.n_kv_heads, cfg.vocab_size, cfg.seq_len,  cfg.gs};
  for (std::size_t i = 0; i < 8; ++i) put_i32(h.data() + 8 + 4 * i, fields[i]);
  h[40] = cfg.shared_classifier ? 1 : 0;
  return h;
}

ModelConfig decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw Error(Errc::format, "header shorter than 256 bytes");
  if (std::memcmp(bytes.data(), kModelMagic.data(), 4) != 0) throw Error(Errc::format, "bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kModelVersion) throw Error(Errc::format, "unsupported version " + std::to_string(version));
  ModelConfig c;
  Index* fields[] = {&c.dim, &c.hidden_dim, &c.n_layers, &c.n_heads, &c.n_kv_heads, &c.vocab_size, &c.seq_len, &c.gs};
  for (std::size_t i = 0; i < 8; ++i) *fields[i] = get_i32(bytes.data() + 8 + 4 * i);
  if (bytes[40] > 1) throw Error(Errc::format, "shared_classifier flag must be 0 or 1");
  c.shared_classifier = bytes[40] == 1;
  try {
    c.check();
  } catch (const Error& e) {
    throw Error(Errc::format, e.what());
  }
  return c;
}

void write_model(const FloatWeights& weights, const std::filesystem::path& path) {
  weights.check();
  const ModelConfig& c = weights.config;
  Writer out(path);
  const auto header = encode_header(c);
  out.bytes(header.data(), header.size());
  for (const FloatLayer& l : weights.layers) out.floats(l.att_norm);
  for (const FloatLayer& l : weights.layers) out.floats(l.ffn_norm);
  out.floats(weights.final_norm);
  out.quantized(weights.embeddings, c.gs);
  for (const FloatLayer& l : weights.layers) {
    for (const RowMatrixXf* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2, &l.w3}) out.quantized(*m, c.gs);
  }
  if (weights.classifier) out.quantized(*weights.classifier, c.gs);
  out.close();
}

void ModelFile::load_layer(Index layer, std::istream& in, LayerWeights& out) const {
  const ModelConfig& c = config;
  if (layer < 0 || layer >= c.n_layers) throw Error(Errc::invalid_input, "layer " + std::to_string(layer));
  const std::string name = "layer " + std::to_string(layer);
  std::uint64_t off = layer_offsets[static_cast<std::size_t>(layer)];
  const Index kv = c.kv_dim();
  off = read_rows(in, off, out.wqkv, 0, c.dim, name + " wq");
  off = read_rows(in, off, out.wqkv, c.dim, kv, name + " wk");
  off = read_rows(in, off, out.wqkv, c.dim + kv, kv, name + " wv");
  off = read_rows(in, off, out.wo, 0, c.dim, name + " wo");
  off = read_rows(in, off, out.w13, 0, c.hidden_dim, name + " w1");
  off = read_rows(in, off, out.w2, 0, c.dim, name + " w2");
  off = read_rows(in, off, out.w13, c.hidden_dim, c.hidden_dim, name + " w3");
  if (off != layer_offsets[static_cast<std::size_t>(layer) + 1]) throw Error(Errc::state, "layer offset table");
}

LayerWeights ModelFile::load_layer(Index layer) const {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  LayerWeights w = LayerWeights::allocate(config);
  load_layer(layer, in, w);
  return w;
}

std::vector<LayerWeights> ModelFile::load_all_layers() const {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<LayerWeights> layers;
  for (Index l = 0; l < config.n_layers; ++l) {
    layers.push_back(LayerWeights::allocate(config));
    load_layer(l, in, layers.back());
  }
  return layers;
}

ModelFile read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::array<std::uint8_t, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderBytes);
  if (static_cast<std::size_t>(in.gcount()) != kHeaderBytes) {
    throw Error(Errc::io, "truncated header in " + path.string() + " at offset " + std::to_string(in.gcount()));
  }
  in.clear();

  ModelFile f;
  f.path = path;
  f.config = decode_header(header);
  const ModelConfig& c = f.config;

  const auto actual = std::filesystem::file_size(path);
  const auto expected = static_cast<std::uintmax_t>(c.file_bytes());
  if (actual < expected) {
    throw Error(Errc::io, path.string() + " truncated at offset " + std::to_string(actual) + ", expected " +
                              std::to_string(expected) + " bytes");
  }
  if (actual > expected) throw Error(Errc::format, path.string() + " has trailing bytes");

  PersistentWeights& p = f.persistent;
  std::uint64_t off = kHeaderBytes;
  p.att_norm.resize(c.n_layers, c.dim);
  p.ffn_norm.resize(c.n_layers, c.dim);
  p.final_norm.resize(c.dim);
  read_exact(in, p.att_norm.data(), sizeof(float) * static_cast<std::size_t>(p.att_norm.size()), off, "att_norm");
  off += sizeof(float) * static_cast<std::size_t>(p.att_norm.size());
  read_exact(in, p.ffn_norm.data(), sizeof(float) * static_cast<std::size_t>(p.ffn_norm.size()), off, "ffn_norm");
  off += sizeof(float) * static_cast<std::size_t>(p.ffn_norm.size());
  read_exact(in, p.final_norm.data(), sizeof(float) * static_cast<std::size_t>(c.dim), off, "final_norm");
  off += sizeof(float) * static_cast<std::size_t>(c.dim);

  p.embeddings = allocate(c.vocab_size, c.dim, c.gs);
  off = read_rows(in, off, p.embeddings, 0, c.vocab_size, "embeddings");

  for (Index l = 0; l <= c.n_layers; ++l) f.layer_offsets.push_back(off + static_cast<std::uint64_t>(l) * c.layer_bytes());
  if (!c.shared_classifier) {
    p.classifier = allocate(c.vocab_size, c.dim, c.gs);
    read_rows(in, f.layer_offsets.back(), *p.classifier, 0, c.vocab_size, "classifier");
  }
  return f;
}

FloatWeights gen_synthetic(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.check();
  std::mt19937_64 rng(seed);
  auto matrix = [&](Index rows, Index cols) {
    std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(cols)));
    RowMatrixXf m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  auto gain = [&]() {
    std::normal_distribution<float> dist(1.0f, 0.05f);
    Eigen::VectorXf v(cfg.dim);
    for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
    return v;
  };
  FloatWeights w;
  w.config = cfg;
  w.embeddings = matrix(cfg.vocab_size, cfg.dim);
  for (Index l = 0; l < cfg.n_layers; ++l) {
    FloatLayer layer;
    layer.wq = matrix(cfg.dim, cfg.dim);
    layer.wk = matrix(cfg.kv_dim(), cfg.dim);
    layer.wv = matrix(cfg.kv_dim(), cfg.dim);
    layer.wo = matrix(cfg.dim, cfg.dim);
    layer.w1 = matrix(cfg.hidden_dim, cfg.dim);
    layer.w2 = matrix(cfg.dim, cfg.hidden_dim);
    layer.w3 = matrix(cfg.hidden_dim, cfg.dim);
    layer.att_norm = gain();
    layer.ffn_norm = gain();
    w.layers.push_back(std::move(layer));
  }
  w.final_norm = gain();
  if (!cfg.shared_classifier) w.classifier = matrix(cfg.vocab_size, cfg.dim);
  return w;
}

PersistentWeights quantize_persistent(const FloatWeights& weights) {
  weights.check();
  const ModelConfig& c = weights.config;
  PersistentWeights p;
  p.embeddings = quantize(weights.embeddings, c.quant_spec());
  if (weights.classifier) p.classifier = quantize(*weights.classifier, c.quant_spec());
  p.att_norm.resize(c.n_layers, c.dim);
  p.ffn_norm.resize(c.n_layers, c.dim);
  for (Index l = 0; l < c.n_layers; ++l) {
    p.att_norm.row(l) = weights.layers[static_cast<std::size_t>(l)].att_norm.transpose();
    p.ffn_norm.row(l) = weights.layers[static_cast<std::size_t>(l)].ffn_norm.transpose();
  }
  p.final_norm = weights.final_norm;
  return p;
}

std::vector<LayerWeights> quantize_layers(const FloatWeights& weights) {
  weights.check();
  const ModelConfig& c = weights.config;
  auto stack = [&](std::initializer_list<const RowMatrixXf*> parts) {
    Index rows = 0;
    for (const RowMatrixXf* m : parts) rows += m->rows();
    RowMatrixXf all(rows, c.dim);
    Index at = 0;
    for (const RowMatrixXf* m : parts) {
      all.middleRows(at, m->rows()) = *m;
      at += m->rows();
    }
    return quantize(all, c.quant_spec());
  };
  std::vector<LayerWeights> layers;
  for (const FloatLayer& l : weights.layers) {
    LayerWeights w;
    w.wqkv = stack({&l.wq, &l.wk, &l.wv});
    w.wo = quantize(l.wo, c.quant_spec());
    w.w13 = stack({&l.w1, &l.w3});
    w.w2 = quantize(l.w2, c.quant_spec());
    layers.push_back(std::move(w));
  }
  return layers;
}

}  // namespace qlm
