#pragma once

#include <optional>

#include "cap/adapter.hpp"
#include "cap/backbone.hpp"
#include "cap/data.hpp"
#include "cap/fact.hpp"
#include "cap/preference.hpp"

namespace cap {

struct ModelConfig {
  BackboneConfig backbone;
  PreferenceConfig upe;
  AdapterConfig adapter;
  FactConfig fact;
};

/// The full personalized generator: backbone + preference encoder + context
/// adapter + the personalization projection. Parameters live in one ordered
/// store; module namespaces (backbone., upe., adapter., pers.) keep
/// checkpoints separable.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;  // backbone holds a pointer to the adapter member
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const PreferenceEncoder& preference() const { return upe_; }
  const ContextAdapter& adapter() const { return adapter_; }
  bool has_adapter() const { return cfg_.adapter.enabled; }

  /// v_u, or the learned cold-start vector when the encoder is disabled or
  /// the history is empty.
  Tensor user_vector(const std::vector<Article>& history) const;

  /// Projected context, or nullopt when the adapter is disabled.
  std::optional<ContextPack> make_context(const Tensor& v_u, const Tensor& e_dc) const;

  /// Maps v_u into backbone space for the personalization loss (identity
  /// when d_u == d_model).
  Tensor pers_projection(const Tensor& v_u) const;

  /// End-to-end headline generation for one record (greedy, no gradients).
  std::vector<int> generate_for(const UserRecord& rec, int max_new) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Backbone backbone_;
  PreferenceEncoder upe_;
  ContextAdapter adapter_;
  Tensor pers_map_;  // defined only when d_u != d_model
};

}  // namespace cap
