#pragma once

#include <random>
#include <vector>

#include "cap/optim.hpp"
#include "cap/tensor.hpp"

namespace cap {

struct AdapterConfig {
  bool enabled = true;
  int d_model = 64;
  int d_u = 64;
  int d_a = 32;   // projected context width
  int rank = 4;   // bottleneck rank
  std::vector<int> layers;  // backbone layers that fuse context; empty = none
};

/// Projected user/article context, computed once per (user, article) pair and
/// reused across layers and decode steps.
struct ContextPack {
  Tensor p_v;
  Tensor p_d;
};

/// Residual low-rank fusion of projected context into hidden states. The
/// up-projection starts at zero so an untrained adapter is an exact no-op.
class ContextAdapter {
 public:
  ContextAdapter() = default;
  ContextAdapter(const AdapterConfig& cfg, ParamStore& params, std::mt19937_64& rng);

  ContextPack project(const Tensor& v_u, const Tensor& e_dc) const;

  /// H'[t] = H[t] + W2 . relu(W1 . [H[t]; P_v; P_d]); identity off-mask.
  Tensor adapt(const Tensor& hidden, const ContextPack& ctx, int layer) const;

  bool layer_active(int layer) const;
  const AdapterConfig& config() const { return cfg_; }

 private:
  AdapterConfig cfg_;
  Tensor proj_v_w_, proj_v_b_, proj_d_w_, proj_d_b_;
  struct Fuse {
    int layer;
    Tensor w1, w2;
  };
  std::vector<Fuse> fuse_;
};

}  // namespace cap
