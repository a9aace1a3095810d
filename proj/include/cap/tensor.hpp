#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace cap {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;  // empty for leaves
  const char* op = "leaf";

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense float64 tensor handle with reverse-mode autodiff. The graph is
/// rebuilt on every forward pass; handles share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = false);
  static Tensor uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }
  std::size_t numel() const;
  std::vector<double>& data();
  const std::vector<double>& data() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);
  double item() const;  // numel()==1 only
  void zero_grad();

  double at(int i) const;
  double at(int i, int j) const;

  detail::TensorNode* node() const { return node_.get(); }
  std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::TensorNode> n);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// While alive, newly created ops do not track gradients (detached values).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

std::string shape_str(const std::vector<int>& shape);

// ---- elementwise / structural ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& mat, const Tensor& vec);  // bias broadcast over last axis
Tensor relu(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor matvec(const Tensor& m, const Tensor& v);  // [n x d] * [d] -> [n]
Tensor vecmat(const Tensor& v, const Tensor& m);  // [n] * [n x d] -> [d]

// ---- shape plumbing ----
Tensor slice_cols(const Tensor& a, int begin, int len);
Tensor concat_cols(const std::vector<Tensor>& ms);
Tensor concat_vecs(const std::vector<Tensor>& vs);
Tensor repeat_rowvec(const Tensor& v, int n);
Tensor stack_rows(const std::vector<Tensor>& vecs);
Tensor stack_scalars(const std::vector<Tensor>& scalars);
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_rows(const Tensor& m);                                  // [n x d] -> [d]
Tensor mean_rows_subset(const Tensor& m, const std::vector<int>& rows);
Tensor log_sum_exp(const Tensor& v);  // vector -> scalar

// ---- nonlinear blocks ----
Tensor softmax(const Tensor& x, int axis);
Tensor softmax_rows(const Tensor& x);
Tensor causal_softmax_rows(const Tensor& scores);  // row t normalizes over cols 0..t
Tensor rms_norm_rows(const Tensor& m, const Tensor& gain);

// ---- losses ----
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires grad; repeated calls without zero_grad add up.
void backward(const Tensor& loss);

}  // namespace cap
