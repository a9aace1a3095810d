#include "cap/preference.hpp"

#include <cmath>

#include "cap/util.hpp"

namespace cap {

PreferenceEncoder::PreferenceEncoder(const PreferenceConfig& cfg, ParamStore& params,
                                     std::mt19937_64& rng)
    : cfg_(cfg) {
  cold_start_ = params.randn("upe.cold_start", {cfg_.d_u}, rng, 0.1);
  if (!cfg_.enabled) return;
  if (cfg_.d_u % cfg_.n_heads != 0)
    fail("preference encoder: d_u " + std::to_string(cfg_.d_u) + " not divisible by n_heads " +
         std::to_string(cfg_.n_heads));
  const double item_std = 1.0 / std::sqrt(static_cast<double>(2 * cfg_.d_model));
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_u));
  const double ff_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff));
  item_proj_ = params.randn("upe.item_proj", {2 * cfg_.d_model, cfg_.d_u}, rng, item_std);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    Layer layer;
    const std::string base = "upe.l" + std::to_string(l) + ".";
    layer.wq = params.randn(base + "attn.wq", {cfg_.d_u, cfg_.d_u}, rng, proj_std);
    layer.wk = params.randn(base + "attn.wk", {cfg_.d_u, cfg_.d_u}, rng, proj_std);
    layer.wv = params.randn(base + "attn.wv", {cfg_.d_u, cfg_.d_u}, rng, proj_std);
    layer.wo = params.randn(base + "attn.wo", {cfg_.d_u, cfg_.d_u}, rng, proj_std);
    layer.attn_gain = params.full(base + "attn.norm_gain", {cfg_.d_u}, 1.0);
    layer.w1 = params.randn(base + "ffn.w1", {cfg_.d_u, cfg_.d_ff}, rng, proj_std);
    layer.b1 = params.zeros(base + "ffn.b1", {cfg_.d_ff});
    layer.w2 = params.randn(base + "ffn.w2", {cfg_.d_ff, cfg_.d_u}, rng, ff_std);
    layer.b2 = params.zeros(base + "ffn.b2", {cfg_.d_u});
    layer.ffn_gain = params.full(base + "ffn.norm_gain", {cfg_.d_u}, 1.0);
    layers_.push_back(std::move(layer));
  }
  final_gain_ = params.full("upe.final_norm_gain", {cfg_.d_u}, 1.0);
  if (cfg_.attn_pool) pool_query_ = params.randn("upe.pool_query", {cfg_.d_u}, rng, proj_std);
  if (cfg_.positions)
    pos_emb_ = params.randn("upe.pos_emb", {cfg_.max_history, cfg_.d_u}, rng, 0.02);
}

Tensor PreferenceEncoder::encode_history_item(const Article& item,
                                              const Backbone& backbone) const {
  if (item.headline.empty()) fail("encode_history_item: empty headline");
  Tensor head = backbone.encode_article(item.headline);
  Tensor body = item.body.empty() ? Tensor::zeros({cfg_.d_model})
                                  : backbone.encode_article(item.body);
  return vecmat(concat_vecs({head, body}), item_proj_);
}

Tensor PreferenceEncoder::attention(const Tensor& x_norm, int layer,
                                    std::vector<Tensor>* attn_out) const {
  const Layer& ly = layers_[static_cast<std::size_t>(layer)];
  const int dh = cfg_.d_u / cfg_.n_heads;
  Tensor q = matmul(x_norm, ly.wq);
  Tensor k = matmul(x_norm, ly.wk);
  Tensor v = matmul(x_norm, ly.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (attn_out) attn_out->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  Tensor merged = cfg_.n_heads == 1 ? heads[0] : concat_cols(heads);
  return matmul(merged, ly.wo);
}

Tensor PreferenceEncoder::feed_forward(const Tensor& x_norm, int layer) const {
  const Layer& ly = layers_[static_cast<std::size_t>(layer)];
  Tensor h = relu(add_rowvec(matmul(x_norm, ly.w1), ly.b1));
  return add_rowvec(matmul(h, ly.w2), ly.b2);
}

Tensor PreferenceEncoder::self_attend(const Tensor& e_u, std::vector<Tensor>* attn_out) const {
  if (!cfg_.enabled) fail("preference encoder: disabled");
  Tensor x = e_u;
  if (cfg_.positions) {
    std::vector<int> idx;
    for (int i = 0; i < e_u.dim(0); ++i) idx.push_back(i);
    x = add(x, embedding_rows(pos_emb_, idx));
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const Layer& ly = layers_[static_cast<std::size_t>(l)];
    x = add(x, attention(rms_norm_rows(x, ly.attn_gain), l, attn_out));
    x = add(x, feed_forward(rms_norm_rows(x, ly.ffn_gain), l));
  }
  return rms_norm_rows(x, final_gain_);
}

Tensor PreferenceEncoder::pool_user_vector(const Tensor& attended) const {
  if (cfg_.attn_pool) {
    Tensor scores = matvec(attended, pool_query_);
    Tensor weights = softmax(scores, 0);
    return vecmat(weights, attended);
  }
  return mean_rows(attended);
}

Tensor PreferenceEncoder::user_preference(const std::vector<Article>& history,
                                          const Backbone& backbone) const {
  if (!cfg_.enabled || history.empty()) return cold_start_;
  std::vector<Tensor> items;
  const std::size_t n = std::min<std::size_t>(history.size(),
                                              static_cast<std::size_t>(cfg_.max_history));
  for (std::size_t i = 0; i < n; ++i)
    items.push_back(encode_history_item(history[i], backbone));
  Tensor e_u = stack_rows(items);
  return pool_user_vector(self_attend(e_u));
}

}  // namespace cap
