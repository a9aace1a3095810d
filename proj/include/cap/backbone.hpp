#pragma once

#include <random>
#include <vector>

#include "cap/adapter.hpp"
#include "cap/optim.hpp"
#include "cap/tensor.hpp"

namespace cap {

struct BackboneConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int vocab_size = 2048;
  int max_seq_len = 560;
};

struct HiddenStates {
  std::vector<Tensor> layer_outputs;  // per-layer [T x d_model], post adapter
  Tensor final_states;                // [T x d_model] after the final norm
  Tensor logits;                      // [T x vocab]
};

/// Decoder-only causal transformer with pre-norm blocks and optional context
/// adapters applied to each layer output.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, ParamStore& params, std::mt19937_64& rng);

  void attach_adapter(const ContextAdapter* adapter) { adapter_ = adapter; }

  /// Full causal pass. When `ctx` is non-null and an adapter is attached,
  /// every masked layer output is fused with the context before the next
  /// layer.
  HiddenStates forward(const std::vector<int>& tokens, const ContextPack* ctx) const;

  /// Mean of final-layer states over non-pad positions of a context-free pass.
  Tensor encode_article(const std::vector<int>& tokens) const;

  /// Greedy decode of a headline from "[bos] body [sep]". Stops at eos or
  /// max_new tokens; returns generated ids without specials.
  std::vector<int> generate(const std::vector<int>& body, const ContextPack* ctx,
                            int max_new) const;

  /// Mean of final states over rows [begin, end).
  static Tensor pool_span(const HiddenStates& states, int begin, int end);

  const BackboneConfig& config() const { return cfg_; }

 private:
  Tensor attention(const Tensor& x_norm, int layer) const;
  Tensor feed_forward(const Tensor& x_norm, int layer) const;

  BackboneConfig cfg_;
  Tensor tok_emb_, pos_emb_, out_proj_, final_gain_;
  struct Layer {
    Tensor wq, wk, wv, wo, attn_gain;
    Tensor w1, b1, w2, b2, ffn_gain;
  };
  std::vector<Layer> layers_;
  const ContextAdapter* adapter_ = nullptr;
};

}  // namespace cap
