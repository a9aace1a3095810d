#include "cap/optim.hpp"

#include <cmath>

#include "cap/util.hpp"

namespace cap {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) fail("param store: duplicate parameter '" + name + "'");
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::randn(const std::string& name, std::vector<int> shape, std::mt19937_64& rng,
                         double stddev) {
  return add(name, Tensor::randn(std::move(shape), rng, stddev));
}

Tensor ParamStore::zeros(const std::string& name, std::vector<int> shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::full(const std::string& name, std::vector<int> shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  fail("param store: unknown parameter '" + name + "'");
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

std::size_t ParamStore::total_elements_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_)
    if (name.rfind(prefix, 0) == 0) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> ParamStore::select(
    const std::function<bool(const std::string&)>& keep) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : items_)
    if (!keep || keep(name)) out.emplace_back(name, t);
  return out;
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& [name, t] = params_[p];
    detail::TensorNode* node = t.node();
    if (node->grad.size() != node->data.size())
      fail("adamw: missing gradient for parameter '" + name + "'");
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < node->data.size(); ++i) {
      const double g = node->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      node->data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                  cfg_.weight_decay * node->data[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& params,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    const detail::TensorNode* node = t.node();
    if (node->grad.size() != node->data.size()) continue;
    for (double g : node->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& [name, t] : params) {
      detail::TensorNode* node = t.node();
      if (node->grad.size() != node->data.size()) continue;
      for (double& g : node->grad) g *= s;
    }
  }
  return norm;
}

}  // namespace cap
