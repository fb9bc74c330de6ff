#include "qlm/float_model.hpp"

#include <string>

#include "qlm/error.hpp"
#include "qlm/ops.hpp"

namespace qlm {

FloatTransformer::FloatTransformer(const FloatWeights& weights)
    : w_(weights),
      cfg_(weights.config),
      cache_(weights.config),
      x_(weights.config.dim),
      att_(weights.config.dim),
      logits_(weights.config.vocab_size),
      scores_(RowMatrixXf::Zero(weights.config.n_heads, weights.config.seq_len)) {
  w_.check();
}

std::span<const float> FloatTransformer::forward(Index token, Index pos) {
  if (token < 0 || token >= cfg_.vocab_size) throw Error(Errc::invalid_input, "token " + std::to_string(token));
  if (pos < 0 || pos >= cfg_.seq_len) throw Error(Errc::position, "position " + std::to_string(pos));
  x_ = w_.embeddings.row(token).transpose();
  for (Index l = 0; l < cfg_.n_layers; ++l) {
    const FloatLayer& layer = w_.layers[static_cast<std::size_t>(l)];
    Eigen::VectorXf xb = rmsnorm(x_, layer.att_norm);
    Eigen::VectorXf q = layer.wq * xb;
    Eigen::VectorXf k = layer.wk * xb;
    Eigen::VectorXf v = layer.wv * xb;
    rope_apply(q, k, pos, cfg_);
    cache_.write(l, pos, {k.data(), static_cast<std::size_t>(k.size())}, {v.data(), static_cast<std::size_t>(v.size())});
    attention({q.data(), static_cast<std::size_t>(q.size())}, cache_, l, pos, cfg_,
              {att_.data(), static_cast<std::size_t>(att_.size())}, scores_);
    x_ += layer.wo * att_;
    xb = rmsnorm(x_, layer.ffn_norm);
    const Eigen::VectorXf h = swiglu(layer.w1 * xb, layer.w3 * xb);
    x_ += layer.w2 * h;
  }
  const Eigen::VectorXf xb = rmsnorm(x_, w_.final_norm);
  logits_ = w_.output_matrix() * xb;
  return {logits_.data(), static_cast<std::size_t>(logits_.size())};
}

}  // namespace qlm
