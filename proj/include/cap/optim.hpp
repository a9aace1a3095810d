#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cap/tensor.hpp"

namespace cap {

/// Ordered registry of named trainable tensors. Creation order is the
/// serialization order, which keeps checkpoints reproducible.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor randn(const std::string& name, std::vector<int> shape, std::mt19937_64& rng,
               double stddev);
  Tensor zeros(const std::string& name, std::vector<int> shape);
  Tensor full(const std::string& name, std::vector<int> shape, double value);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t total_elements() const;
  std::size_t total_elements_with_prefix(const std::string& prefix) const;

  void zero_grad();

  /// Parameters whose name passes the filter (empty filter keeps all).
  std::vector<std::pair<std::string, Tensor>> select(
      const std::function<bool(const std::string&)>& keep) const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay over a fixed parameter list.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

  /// One update. Requires every parameter's gradient buffer to be allocated.
  void step();
  void zero_grad();
  long step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  long step_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& params,
                        double max_norm);

}  // namespace cap
