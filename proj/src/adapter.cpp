#include "cap/adapter.hpp"

#include <cmath>

#include "cap/util.hpp"

namespace cap {

ContextAdapter::ContextAdapter(const AdapterConfig& cfg, ParamStore& params,
                               std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg_.rank < 1) fail("adapter: rank must be >= 1");
  const double pv_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_u));
  const double pd_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
  proj_v_w_ = params.randn("adapter.proj_v.w", {cfg_.d_u, cfg_.d_a}, rng, pv_std);
  proj_v_b_ = params.zeros("adapter.proj_v.b", {cfg_.d_a});
  proj_d_w_ = params.randn("adapter.proj_d.w", {cfg_.d_model, cfg_.d_a}, rng, pd_std);
  proj_d_b_ = params.zeros("adapter.proj_d.b", {cfg_.d_a});
  const int fan_in = cfg_.d_model + 2 * cfg_.d_a;
  const double w1_std = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int layer : cfg_.layers) {
    Fuse f;
    f.layer = layer;
    const std::string base = "adapter.l" + std::to_string(layer) + ".";
    f.w1 = params.randn(base + "w1", {fan_in, cfg_.rank}, rng, w1_std);
    f.w2 = params.zeros(base + "w2", {cfg_.rank, cfg_.d_model});  // safe start
    fuse_.push_back(std::move(f));
  }
}

ContextPack ContextAdapter::project(const Tensor& v_u, const Tensor& e_dc) const {
  ContextPack ctx;
  ctx.p_v = add(vecmat(v_u, proj_v_w_), proj_v_b_);
  ctx.p_d = add(vecmat(e_dc, proj_d_w_), proj_d_b_);
  return ctx;
}

bool ContextAdapter::layer_active(int layer) const {
  for (const auto& f : fuse_)
    if (f.layer == layer) return true;
  return false;
}

Tensor ContextAdapter::adapt(const Tensor& hidden, const ContextPack& ctx, int layer) const {
  const Fuse* fuse = nullptr;
  for (const auto& f : fuse_)
    if (f.layer == layer) fuse = &f;
  if (!fuse) return hidden;
  const int t = hidden.dim(0);
  Tensor fused = concat_cols({hidden, repeat_rowvec(ctx.p_v, t), repeat_rowvec(ctx.p_d, t)});
  Tensor bottleneck = relu(matmul(fused, fuse->w1));
  return add(hidden, matmul(bottleneck, fuse->w2));
}

}  // namespace cap
