#include "qlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qlm/error.hpp"
#include "qlm/gqmv.hpp"
#include "qlm/ops.hpp"

namespace qlm {

namespace {

using Clock = std::chrono::steady_clock;

class ScopedTimer {
 public:
  explicit ScopedTimer(double& sink) : sink_(sink), start_(Clock::now()) {}
  ~ScopedTimer() { sink_ += std::chrono::duration<double>(Clock::now() - start_).count(); }

 private:
  double& sink_;
  Clock::time_point start_;
};

template <typename Vec>
std::span<float> span_of(Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

template <typename Vec>
std::span<const float> cspan_of(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void quantize_activations(const Eigen::VectorXf& x, Index gs, VectorXi8& xq, Eigen::VectorXf& xs) {
  quantize_into(cspan_of(x), gs, {xq.data(), static_cast<std::size_t>(xq.size())}, span_of(xs));
}

}  // namespace

KVCache::KVCache(const ModelConfig& cfg)
    : keys_(static_cast<std::size_t>(cfg.n_layers), RowMatrixXf::Zero(cfg.seq_len, cfg.kv_dim())),
      values_(static_cast<std::size_t>(cfg.n_layers), RowMatrixXf::Zero(cfg.seq_len, cfg.kv_dim())),
      filled_(static_cast<std::size_t>(cfg.n_layers), 0) {}

void KVCache::write(Index layer, Index pos, std::span<const float> key, std::span<const float> value) {
  if (layer < 0 || layer >= static_cast<Index>(filled_.size())) throw Error(Errc::invalid_input, "cache layer");
  auto& keys = keys_[static_cast<std::size_t>(layer)];
  if (pos < 0 || pos >= keys.rows()) throw Error(Errc::position, "cache position " + std::to_string(pos));
  if (pos != filled(layer)) {
    throw Error(Errc::state, "cache layer " + std::to_string(layer) + " expects position " +
                                 std::to_string(filled(layer)) + ", got " + std::to_string(pos));
  }
  if (static_cast<Index>(key.size()) != keys.cols() || static_cast<Index>(value.size()) != keys.cols()) {
    throw Error(Errc::invalid_shape, "cache row length");
  }
  keys.row(pos) = Eigen::Map<const Eigen::RowVectorXf>(key.data(), keys.cols());
  values_[static_cast<std::size_t>(layer)].row(pos) = Eigen::Map<const Eigen::RowVectorXf>(value.data(), keys.cols());
  filled_[static_cast<std::size_t>(layer)] = pos + 1;
}

void KVCache::reset() { std::fill(filled_.begin(), filled_.end(), 0); }

void attention(std::span<const float> q, const KVCache& cache, Index layer, Index pos, const ModelConfig& cfg,
               std::span<float> out, RowMatrixXf& scores, Workers* workers) {
  if (pos < 0 || pos >= cfg.seq_len) throw Error(Errc::position, "attention position " + std::to_string(pos));
  if (cache.filled(layer) <= pos) {
    throw Error(Errc::state, "cache for layer " + std::to_string(layer) + " holds " +
                                 std::to_string(cache.filled(layer)) + " positions, attention needs " +
                                 std::to_string(pos + 1));
  }
  const Index hd = cfg.head_dim();
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
  auto heads = [&](Index begin, Index end) {
    for (Index h = begin; h < end; ++h) {
      const Index kv_off = (h / cfg.kv_group()) * hd;
      Eigen::Map<const Eigen::RowVectorXf> qh(q.data() + h * hd, hd);
      auto att = scores.row(h).head(pos + 1);
      for (Index t = 0; t <= pos; ++t) att[t] = qh.dot(cache.key(layer, t).segment(kv_off, hd)) * inv_sqrt;
      softmax(att);
      Eigen::Map<Eigen::RowVectorXf> oh(out.data() + h * hd, hd);
      oh.setZero();
      for (Index t = 0; t <= pos; ++t) oh += att[t] * cache.value(layer, t).segment(kv_off, hd);
    }
  };
  if (workers) {
    workers->parallel_for(cfg.n_heads, heads);
  } else {
    heads(0, cfg.n_heads);
  }
}

std::size_t ResidentLayers::bytes() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += l.bytes();
  return total;
}

const char* to_string(Component c) {
  switch (c) {
    case Component::matmul: return "matrix computation";
    case Component::attention: return "multi-head attention";
    case Component::swiglu: return "swiglu";
    case Component::rope: return "rope";
    case Component::rmsnorm: return "rmsnorm";
  }
  return "?";
}

double Profile::total() const { return std::accumulate(seconds.begin(), seconds.end(), 0.0); }

std::array<double, kComponents> Profile::fractions() const {
  std::array<double, kComponents> f{};
  const double t = total();
  if (t <= 0) return f;
  for (int i = 0; i < kComponents; ++i) f[static_cast<std::size_t>(i)] = seconds[static_cast<std::size_t>(i)] / t;
  return f;
}

RunState::RunState(const ModelConfig& cfg)
    : x(Eigen::VectorXf::Zero(cfg.dim)),
      xb(Eigen::VectorXf::Zero(cfg.dim)),
      xq(VectorXi8::Zero(cfg.dim)),
      xs(Eigen::VectorXf::Zero(cfg.dim / cfg.gs)),
      hq(VectorXi8::Zero(cfg.hidden_dim)),
      hs(Eigen::VectorXf::Zero(cfg.hidden_dim / cfg.gs)),
      qkv(Eigen::VectorXf::Zero(cfg.dim + 2 * cfg.kv_dim())),
      att_buffer(Eigen::VectorXf::Zero(cfg.dim)),
      proj(Eigen::VectorXf::Zero(cfg.dim)),
      ffn_buffer(Eigen::VectorXf::Zero(2 * cfg.hidden_dim)),
      hb(Eigen::VectorXf::Zero(cfg.hidden_dim)),
      logits(Eigen::VectorXf::Zero(cfg.vocab_size)),
      scores(RowMatrixXf::Zero(cfg.n_heads, cfg.seq_len)) {}

Transformer::Transformer(const ModelConfig& cfg, const PersistentWeights& weights, LayerSource& layers,
                         Workers* workers, Kernel kernel)
    : cfg_(cfg), weights_(weights), layers_(layers), workers_(workers), kernel_(kernel), state_(cfg), cache_(cfg) {
  cfg_.check();
}

void Transformer::reset() {
  cache_.reset();
  state_ = RunState(cfg_);
}

void Transformer::matvec(const QuantizedTensor& w, const VectorXi8& xq, const Eigen::VectorXf& xs,
                         Eigen::VectorXf& out) {
  const GqmvProblem p{w.value_span(), w.scale_span(), {xq.data(), static_cast<std::size_t>(xq.size())},
                      cspan_of(xs), w.rows, w.cols, w.spec.group_size};
  p.check();
  const auto dst = span_of(out);
  auto rows = [&](Index begin, Index end) {
    if (kernel_ == Kernel::staged) {
      gqmv_staged_rows(p, begin, end, dst);
    } else {
      gqmv_reference_rows(p, begin, end, dst);
    }
  };
  const auto start = Clock::now();
  if (workers_) {
    workers_->parallel_for(p.m, rows);
  } else {
    rows(0, p.m);
  }
  profile_.kernel_seconds += std::chrono::duration<double>(Clock::now() - start).count();
  profile_.kernel_ops += 2ull * static_cast<std::uint64_t>(p.m) * static_cast<std::uint64_t>(p.n);
}

std::span<const float> Transformer::forward(Index token, Index pos) {
  if (token < 0 || token >= cfg_.vocab_size) throw Error(Errc::invalid_input, "token " + std::to_string(token));
  if (pos < 0 || pos >= cfg_.seq_len) throw Error(Errc::position, "position " + std::to_string(pos));

  RunState& s = state_;
  auto& t = profile_.seconds;
  const Index dim = cfg_.dim;
  const Index kv_dim = cfg_.kv_dim();
  const Index hidden = cfg_.hidden_dim;
  const Index gs = cfg_.gs;

  {
    const QuantizedTensor& emb = weights_.embeddings;
    const Index groups = dim / gs;
    for (Index i = 0; i < dim; ++i) {
      s.x[i] = static_cast<float>(emb.values[token * dim + i]) * emb.scales[token * groups + i / gs];
    }
  }

  for (Index l = 0; l < cfg_.n_layers; ++l) {
    const LayerWeights& w = layers_.acquire(l);
    {
      ScopedTimer timer(t[static_cast<int>(Component::rmsnorm)]);
      s.xb = rmsnorm(s.x, weights_.att_norm.row(l).transpose());
      quantize_activations(s.xb, gs, s.xq, s.xs);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::matmul)]);
      matvec(w.wqkv, s.xq, s.xs, s.qkv);
    }
    auto q = s.qkv.segment(0, dim);
    auto k = s.qkv.segment(dim, kv_dim);
    auto v = s.qkv.segment(dim + kv_dim, kv_dim);
    {
      ScopedTimer timer(t[static_cast<int>(Component::rope)]);
      rope_apply(q, k, pos, cfg_);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::attention)]);
      cache_.write(l, pos, {k.data(), static_cast<std::size_t>(kv_dim)}, {v.data(), static_cast<std::size_t>(kv_dim)});
      attention({q.data(), static_cast<std::size_t>(dim)}, cache_, l, pos, cfg_, span_of(s.att_buffer), s.scores,
                workers_);
      quantize_activations(s.att_buffer, gs, s.xq, s.xs);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::matmul)]);
      matvec(w.wo, s.xq, s.xs, s.proj);
      s.x += s.proj;
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::rmsnorm)]);
      s.xb = rmsnorm(s.x, weights_.ffn_norm.row(l).transpose());
      quantize_activations(s.xb, gs, s.xq, s.xs);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::matmul)]);
      matvec(w.w13, s.xq, s.xs, s.ffn_buffer);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::swiglu)]);
      s.hb = swiglu(s.ffn_buffer.head(hidden), s.ffn_buffer.tail(hidden));
      quantize_activations(s.hb, gs, s.hq, s.hs);
    }
    {
      ScopedTimer timer(t[static_cast<int>(Component::matmul)]);
      matvec(w.w2, s.hq, s.hs, s.proj);
      s.x += s.proj;
    }
    layers_.release(l);
  }

  {
    ScopedTimer timer(t[static_cast<int>(Component::rmsnorm)]);
    s.xb = rmsnorm(s.x, weights_.final_norm);
    quantize_activations(s.xb, gs, s.xq, s.xs);
  }
  {
    ScopedTimer timer(t[static_cast<int>(Component::matmul)]);
    classifier_only();
  }
  return cspan_of(s.logits);
}

void Transformer::classifier_only() {
  const double before_s = profile_.kernel_seconds;
  const std::uint64_t before_ops = profile_.kernel_ops;
  matvec(weights_.output_matrix(), state_.xq, state_.xs, state_.logits);
  profile_.classifier_seconds += profile_.kernel_seconds - before_s;
  profile_.classifier_ops += profile_.kernel_ops - before_ops;
}

}  // namespace qlm
