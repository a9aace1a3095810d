#include "cap/backbone.hpp"

#include <cmath>

#include "cap/text.hpp"
#include "cap/util.hpp"

namespace cap {

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& params, std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg_.d_model % cfg_.n_heads != 0)
    fail("backbone: d_model " + std::to_string(cfg_.d_model) + " not divisible by n_heads " +
         std::to_string(cfg_.n_heads));
  const double emb_std = 0.02;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  const double ff_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff));
  tok_emb_ = params.randn("backbone.tok_emb", {cfg_.vocab_size, cfg_.d_model}, rng, emb_std);
  pos_emb_ = params.randn("backbone.pos_emb", {cfg_.max_seq_len, cfg_.d_model}, rng, emb_std);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    Layer layer;
    const std::string base = "backbone.l" + std::to_string(l) + ".";
    layer.wq = params.randn(base + "attn.wq", {cfg_.d_model, cfg_.d_model}, rng, proj_std);
    layer.wk = params.randn(base + "attn.wk", {cfg_.d_model, cfg_.d_model}, rng, proj_std);
    layer.wv = params.randn(base + "attn.wv", {cfg_.d_model, cfg_.d_model}, rng, proj_std);
    layer.wo = params.randn(base + "attn.wo", {cfg_.d_model, cfg_.d_model}, rng, proj_std);
    layer.attn_gain = params.full(base + "attn.norm_gain", {cfg_.d_model}, 1.0);
    layer.w1 = params.randn(base + "ffn.w1", {cfg_.d_model, cfg_.d_ff}, rng, proj_std);
    layer.b1 = params.zeros(base + "ffn.b1", {cfg_.d_ff});
    layer.w2 = params.randn(base + "ffn.w2", {cfg_.d_ff, cfg_.d_model}, rng, ff_std);
    layer.b2 = params.zeros(base + "ffn.b2", {cfg_.d_model});
    layer.ffn_gain = params.full(base + "ffn.norm_gain", {cfg_.d_model}, 1.0);
    layers_.push_back(std::move(layer));
  }
  final_gain_ = params.full("backbone.final_norm_gain", {cfg_.d_model}, 1.0);
  out_proj_ = params.randn("backbone.out_proj", {cfg_.d_model, cfg_.vocab_size}, rng, proj_std);
}

Tensor Backbone::attention(const Tensor& x_norm, int layer) const {
  const Layer& ly = layers_[static_cast<std::size_t>(layer)];
  const int t = x_norm.dim(0);
  const int dh = cfg_.d_model / cfg_.n_heads;
  Tensor q = matmul(x_norm, ly.wq);
  Tensor k = matmul(x_norm, ly.wk);
  Tensor v = matmul(x_norm, ly.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(cfg_.n_heads));
  for (int h = 0; h < cfg_.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor weights = causal_softmax_rows(scores);
    heads.push_back(matmul(weights, vh));
  }
  Tensor merged = cfg_.n_heads == 1 ? heads[0] : concat_cols(heads);
  (void)t;
  return matmul(merged, ly.wo);
}

Tensor Backbone::feed_forward(const Tensor& x_norm, int layer) const {
  const Layer& ly = layers_[static_cast<std::size_t>(layer)];
  Tensor h = relu(add_rowvec(matmul(x_norm, ly.w1), ly.b1));
  return add_rowvec(matmul(h, ly.w2), ly.b2);
}

HiddenStates Backbone::forward(const std::vector<int>& tokens, const ContextPack* ctx) const {
  if (tokens.empty()) fail("backbone: empty input");
  const int t = static_cast<int>(tokens.size());
  if (t > cfg_.max_seq_len)
    fail("backbone: input length " + std::to_string(t) + " exceeds max_seq_len " +
         std::to_string(cfg_.max_seq_len));
  std::vector<int> positions(tokens.size());
  for (int i = 0; i < t; ++i) positions[static_cast<std::size_t>(i)] = i;
  Tensor x = add(embedding_rows(tok_emb_, tokens), embedding_rows(pos_emb_, positions));

  HiddenStates states;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const Layer& ly = layers_[static_cast<std::size_t>(l)];
    x = add(x, attention(rms_norm_rows(x, ly.attn_gain), l));
    x = add(x, feed_forward(rms_norm_rows(x, ly.ffn_gain), l));
    if (ctx && adapter_) x = adapter_->adapt(x, *ctx, l);
    states.layer_outputs.push_back(x);
  }
  states.final_states = rms_norm_rows(x, final_gain_);
  states.logits = matmul(states.final_states, out_proj_);
  return states;
}

Tensor Backbone::encode_article(const std::vector<int>& tokens) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] != Vocab::kPad) rows.push_back(static_cast<int>(i));
  if (rows.empty()) fail("encode_article: empty input");
  HiddenStates states = forward(tokens, nullptr);
  return mean_rows_subset(states.final_states, rows);
}

Tensor Backbone::pool_span(const HiddenStates& states, int begin, int end) {
  if (begin >= end) fail("pool_span: empty span");
  std::vector<int> rows;
  for (int i = begin; i < end; ++i) rows.push_back(i);
  return mean_rows_subset(states.final_states, rows);
}

std::vector<int> Backbone::generate(const std::vector<int>& body, const ContextPack* ctx,
                                    int max_new) const {
  NoGradGuard ng;
  std::vector<int> seq;
  seq.push_back(Vocab::kBos);
  seq.insert(seq.end(), body.begin(), body.end());
  seq.push_back(Vocab::kSep);
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(seq.size()) >= cfg_.max_seq_len) break;
    HiddenStates states = forward(seq, ctx);
    const int t = states.logits.dim(0);
    const int v = states.logits.dim(1);
    const auto& logits = states.logits.data();
    const double* row = logits.data() + static_cast<std::size_t>(t - 1) * v;
    int best = 0;
    for (int j = 1; j < v; ++j)
      if (row[j] > row[best]) best = j;
    if (best == Vocab::kEos) break;
    out.push_back(best);
    seq.push_back(best);
  }
  return out;
}

}  // namespace cap
