#pragma once

#include <random>
#include <vector>

#include "cap/backbone.hpp"
#include "cap/data.hpp"
#include "cap/optim.hpp"
#include "cap/tensor.hpp"

namespace cap {

struct PreferenceConfig {
  bool enabled = true;
  int d_model = 64;   // backbone width feeding the item encoder
  int d_u = 64;       // user-vector width
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  bool attn_pool = false;   // learnable attention pooling instead of mean
  bool positions = false;   // recency position embeddings over history slots
  int max_history = 50;
};

/// Aggregates a user's clicked articles into one interest vector via
/// per-item encoding, bidirectional self-attention, and pooling.
class PreferenceEncoder {
 public:
  PreferenceEncoder() = default;
  PreferenceEncoder(const PreferenceConfig& cfg, ParamStore& params, std::mt19937_64& rng);

  /// Headline and body are separately mean-pooled by the backbone, then the
  /// concatenation is projected to d_u. Empty body contributes a zero half.
  Tensor encode_history_item(const Article& item, const Backbone& backbone) const;

  /// Two-layer transformer encoder over the history rows (no causal mask).
  /// When `attn_out` is non-null, the per-layer per-head attention row
  /// distributions are appended to it (values only).
  Tensor self_attend(const Tensor& e_u, std::vector<Tensor>* attn_out = nullptr) const;

  Tensor pool_user_vector(const Tensor& attended) const;

  /// Full composition; empty history falls back to the learned cold-start
  /// vector.
  Tensor user_preference(const std::vector<Article>& history, const Backbone& backbone) const;

  Tensor cold_start() const { return cold_start_; }
  const PreferenceConfig& config() const { return cfg_; }

 private:
  Tensor attention(const Tensor& x_norm, int layer, std::vector<Tensor>* attn_out) const;
  Tensor feed_forward(const Tensor& x_norm, int layer) const;

  PreferenceConfig cfg_;
  Tensor item_proj_;
  struct Layer {
    Tensor wq, wk, wv, wo, attn_gain;
    Tensor w1, b1, w2, b2, ffn_gain;
  };
  std::vector<Layer> layers_;
  Tensor final_gain_;
  Tensor pool_query_;
  Tensor pos_emb_;
  Tensor cold_start_;
};

}  // namespace cap
