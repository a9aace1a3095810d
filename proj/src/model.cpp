#include "cap/model.hpp"

#include <cmath>

#include "cap/util.hpp"

namespace cap {

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  std::mt19937_64 rng(derive_seed(seed, "model-init"));
  backbone_ = Backbone(cfg_.backbone, params_, rng);
  upe_ = PreferenceEncoder(cfg_.upe, params_, rng);
  if (cfg_.adapter.enabled) {
    adapter_ = ContextAdapter(cfg_.adapter, params_, rng);
    backbone_.attach_adapter(&adapter_);
  }
  if (cfg_.upe.d_u != cfg_.backbone.d_model) {
    const double std = 1.0 / std::sqrt(static_cast<double>(cfg_.upe.d_u));
    pers_map_ = params_.randn("pers.map", {cfg_.upe.d_u, cfg_.backbone.d_model}, rng, std);
  }
}

Tensor Model::user_vector(const std::vector<Article>& history) const {
  return upe_.user_preference(history, backbone_);
}

std::optional<ContextPack> Model::make_context(const Tensor& v_u, const Tensor& e_dc) const {
  if (!cfg_.adapter.enabled) return std::nullopt;
  return adapter_.project(v_u, e_dc);
}

Tensor Model::pers_projection(const Tensor& v_u) const {
  if (!pers_map_.defined()) return v_u;
  return vecmat(v_u, pers_map_);
}

std::vector<int> Model::generate_for(const UserRecord& rec, int max_new) const {
  NoGradGuard ng;
  std::optional<ContextPack> ctx;
  if (cfg_.adapter.enabled) {
    Tensor v_u = user_vector(rec.history);
    Tensor e_dc = backbone_.encode_article(rec.current.body);
    ctx = make_context(v_u, e_dc);
  }
  return backbone_.generate(rec.current.body, ctx ? &*ctx : nullptr, max_new);
}

}  // namespace cap
