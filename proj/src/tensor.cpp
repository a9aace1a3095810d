#include "cap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cap/util.hpp"

namespace cap {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail("tensor: non-positive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

NodePtr make_leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  auto n = std::make_shared<detail::TensorNode>();
  if (shape_numel(shape) != values.size())
    fail("tensor: value count " + std::to_string(values.size()) + " does not match shape " +
         shape_str(shape));
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

/// Builds an op output node; drops graph edges when tracking is off.
Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<Tensor> parents, std::function<void(detail::TensorNode&)> backward_fn,
               const char* op) {
  auto n = make_leaf(std::move(shape), std::move(values), false);
  n->op = op;
  bool track = g_grad_enabled;
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(n));
}

void accum(detail::TensorNode& parent, const double* g, std::size_t n) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (std::size_t i = 0; i < n; ++i) parent.grad[i] += g[i];
}

void check_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank)
    fail(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
         shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor handle ----

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  return wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return wrap(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return wrap(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi,
                       bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return wrap(make_leaf(std::move(shape), std::move(v), requires_grad));
}

const std::vector<int>& Tensor::shape() const {
  if (!node_) fail("tensor: undefined handle");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->numel() : 0; }

std::vector<double>& Tensor::data() {
  if (!node_) fail("tensor: undefined handle");
  return node_->data;
}

const std::vector<double>& Tensor::data() const {
  if (!node_) fail("tensor: undefined handle");
  return node_->data;
}

std::vector<double>& Tensor::grad() {
  if (!node_) fail("tensor: undefined handle");
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) fail("tensor: undefined handle");
  const_cast<detail::TensorNode*>(node_.get())->ensure_grad();
  return node_->grad;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (!node_) fail("tensor: undefined handle");
  node_->requires_grad = v;
}

double Tensor::item() const {
  if (numel() != 1) fail("tensor: item() requires a single element, got " + shape_str(shape()));
  return data()[0];
}

void Tensor::zero_grad() {
  if (!node_) return;
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::at(int i) const {
  check_rank(*this, 1, "at");
  return data()[static_cast<std::size_t>(i)];
}

double Tensor::at(int i, int j) const {
  check_rank(*this, 2, "at");
  return data()[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim(1)) +
                static_cast<std::size_t>(j)];
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::TensorNode& self) {
        accum(*self.parents[0], self.grad.data(), self.grad.size());
        accum(*self.parents[1], self.grad.data(), self.grad.size());
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::TensorNode& self) {
        accum(*self.parents[0], self.grad.data(), self.grad.size());
        auto& pb = *self.parents[1];
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(
      a.shape(), std::move(out), {a, b},
      [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            pb.grad[i] += self.grad[i] * pa.data[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double c) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  return make_op(
      a.shape(), std::move(out), {a},
      [c](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += c * self.grad[i];
      },
      "scale");
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
  check_rank(mat, 2, "add_rowvec");
  check_rank(vec, 1, "add_rowvec");
  const int n = mat.dim(0), d = mat.dim(1);
  if (vec.dim(0) != d)
    fail("add_rowvec: shape mismatch " + shape_str(mat.shape()) + " vs " +
         shape_str(vec.shape()));
  const auto& mv = mat.data();
  const auto& vv = vec.data();
  std::vector<double> out(mv.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] =
        mv[static_cast<std::size_t>(i) * d + j] + vv[static_cast<std::size_t>(j)];
  return make_op(
      mat.shape(), std::move(out), {mat, vec},
      [n, d](detail::TensorNode& self) {
        accum(*self.parents[0], self.grad.data(), self.grad.size());
        auto& pv = *self.parents[1];
        if (!pv.requires_grad) return;
        pv.ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            pv.grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i) * d + j];
      },
      "add_rowvec");
}

Tensor relu(const Tensor& a) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return make_op(
      a.shape(), std::move(out), {a},
      [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (pa.data[i] > 0.0) pa.grad[i] += self.grad[i];
      },
      "relu");
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    fail("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    double* crow = out.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aik = arow[p];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return make_op(
      {m, n}, std::move(out), {a, b},
      [m, k, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (pa.requires_grad) {
          pa.ensure_grad();
          // dA = g . B^T
          for (int i = 0; i < m; ++i) {
            const double* grow = g + static_cast<std::size_t>(i) * n;
            double* darow = pa.grad.data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
              const double* brow = pb.data.data() + static_cast<std::size_t>(p) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              darow[p] += acc;
            }
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // dB = A^T . g
          for (int p = 0; p < k; ++p) {
            double* dbrow = pb.grad.data() + static_cast<std::size_t>(p) * n;
            for (int i = 0; i < m; ++i) {
              const double aip = pa.data[static_cast<std::size_t>(i) * k + p];
              if (aip == 0.0) continue;
              const double* grow = g + static_cast<std::size_t>(i) * n;
              for (int j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
            }
          }
        }
      },
      "matmul");
}

Tensor transpose(const Tensor& a) {
  check_rank(a, 2, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  return make_op(
      {n, m}, std::move(out), {a},
      [m, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < m; ++i)
            pa.grad[static_cast<std::size_t>(i) * n + j] +=
                self.grad[static_cast<std::size_t>(j) * m + i];
      },
      "transpose");
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  check_rank(m, 2, "matvec");
  check_rank(v, 1, "matvec");
  const int n = m.dim(0), d = m.dim(1);
  if (v.dim(0) != d)
    fail("matvec: shape mismatch " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  const auto& mv = m.data();
  const auto& vv = v.data();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* row = mv.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) acc += row[j] * vv[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return make_op(
      {n}, std::move(out), {m, v},
      [n, d](detail::TensorNode& self) {
        auto& pm = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pm.requires_grad) {
          pm.ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double gi = self.grad[static_cast<std::size_t>(i)];
            double* row = pm.grad.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) row[j] += gi * pv.data[static_cast<std::size_t>(j)];
          }
        }
        if (pv.requires_grad) {
          pv.ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double gi = self.grad[static_cast<std::size_t>(i)];
            const double* row = pm.data.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) pv.grad[static_cast<std::size_t>(j)] += gi * row[j];
          }
        }
      },
      "matvec");
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
  check_rank(v, 1, "vecmat");
  check_rank(m, 2, "vecmat");
  const int n = m.dim(0), d = m.dim(1);
  if (v.dim(0) != n)
    fail("vecmat: shape mismatch " + shape_str(v.shape()) + " vs " + shape_str(m.shape()));
  const auto& mv = m.data();
  const auto& vv = v.data();
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i) {
    const double vi = vv[static_cast<std::size_t>(i)];
    if (vi == 0.0) continue;
    const double* row = mv.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += vi * row[j];
  }
  return make_op(
      {d}, std::move(out), {v, m},
      [n, d](detail::TensorNode& self) {
        auto& pv = *self.parents[0];
        auto& pm = *self.parents[1];
        if (pv.requires_grad) {
          pv.ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double* row = pm.data.data() + static_cast<std::size_t>(i) * d;
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += self.grad[static_cast<std::size_t>(j)] * row[j];
            pv.grad[static_cast<std::size_t>(i)] += acc;
          }
        }
        if (pm.requires_grad) {
          pm.ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double vi = pv.data[static_cast<std::size_t>(i)];
            if (vi == 0.0) continue;
            double* row = pm.grad.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) row[j] += vi * self.grad[static_cast<std::size_t>(j)];
          }
        }
      },
      "vecmat");
}

// ---- shape plumbing ----

Tensor slice_cols(const Tensor& a, int begin, int len) {
  check_rank(a, 2, "slice_cols");
  const int n = a.dim(0), d = a.dim(1);
  if (begin < 0 || len <= 0 || begin + len > d)
    fail("slice_cols: invalid slice [" + std::to_string(begin) + ", " +
         std::to_string(begin + len) + ") of " + shape_str(a.shape()));
  const auto& av = a.data();
  std::vector<double> out(static_cast<std::size_t>(n) * len);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<std::size_t>(i) * len + j] =
          av[static_cast<std::size_t>(i) * d + begin + j];
  return make_op(
      {n, len}, std::move(out), {a},
      [n, d, begin, len](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < len; ++j)
            pa.grad[static_cast<std::size_t>(i) * d + begin + j] +=
                self.grad[static_cast<std::size_t>(i) * len + j];
      },
      "slice_cols");
}

Tensor concat_cols(const std::vector<Tensor>& ms) {
  if (ms.empty()) fail("concat_cols: empty input list");
  const int n = ms[0].dim(0);
  int total = 0;
  for (const auto& m : ms) {
    check_rank(m, 2, "concat_cols");
    if (m.dim(0) != n)
      fail("concat_cols: row mismatch " + shape_str(ms[0].shape()) + " vs " +
           shape_str(m.shape()));
    total += m.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(n) * total);
  int off = 0;
  for (const auto& m : ms) {
    const int d = m.dim(1);
    const auto& mv = m.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(i) * total + off + j] =
            mv[static_cast<std::size_t>(i) * d + j];
    off += d;
  }
  std::vector<int> widths;
  for (const auto& m : ms) widths.push_back(m.dim(1));
  return make_op(
      {n, total}, std::move(out), ms,
      [n, total, widths](detail::TensorNode& self) {
        int off2 = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& par = *self.parents[p];
          const int d = widths[p];
          if (par.requires_grad) {
            par.ensure_grad();
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < d; ++j)
                par.grad[static_cast<std::size_t>(i) * d + j] +=
                    self.grad[static_cast<std::size_t>(i) * total + off2 + j];
          }
          off2 += d;
        }
      },
      "concat_cols");
}

Tensor concat_vecs(const std::vector<Tensor>& vs) {
  if (vs.empty()) fail("concat_vecs: empty input list");
  int total = 0;
  for (const auto& v : vs) {
    check_rank(v, 1, "concat_vecs");
    total += v.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total));
  for (const auto& v : vs) out.insert(out.end(), v.data().begin(), v.data().end());
  std::vector<int> widths;
  for (const auto& v : vs) widths.push_back(v.dim(0));
  return make_op(
      {total}, std::move(out), vs,
      [widths](detail::TensorNode& self) {
        int off = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& par = *self.parents[p];
          const int d = widths[p];
          if (par.requires_grad) {
            par.ensure_grad();
            for (int j = 0; j < d; ++j)
              par.grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(off + j)];
          }
          off += d;
        }
      },
      "concat_vecs");
}

Tensor repeat_rowvec(const Tensor& v, int n) {
  check_rank(v, 1, "repeat_rowvec");
  if (n <= 0) fail("repeat_rowvec: non-positive row count");
  const int d = v.dim(0);
  const auto& vv = v.data();
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = vv[static_cast<std::size_t>(j)];
  return make_op(
      {n, d}, std::move(out), {v},
      [n, d](detail::TensorNode& self) {
        auto& pv = *self.parents[0];
        if (!pv.requires_grad) return;
        pv.ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            pv.grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i) * d + j];
      },
      "repeat_rowvec");
}

Tensor stack_rows(const std::vector<Tensor>& vecs) {
  if (vecs.empty()) fail("stack_rows: empty input list");
  const int d = vecs[0].dim(0);
  for (const auto& v : vecs) {
    check_rank(v, 1, "stack_rows");
    if (v.dim(0) != d)
      fail("stack_rows: width mismatch " + shape_str(vecs[0].shape()) + " vs " +
           shape_str(v.shape()));
  }
  const int n = static_cast<int>(vecs.size());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * d);
  for (const auto& v : vecs) out.insert(out.end(), v.data().begin(), v.data().end());
  return make_op(
      {n, d}, std::move(out), vecs,
      [d](detail::TensorNode& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& par = *self.parents[p];
          if (!par.requires_grad) continue;
          par.ensure_grad();
          for (int j = 0; j < d; ++j)
            par.grad[static_cast<std::size_t>(j)] += self.grad[p * static_cast<std::size_t>(d) + j];
        }
      },
      "stack_rows");
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) fail("stack_scalars: empty input list");
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.numel() != 1) fail("stack_scalars: non-scalar element of shape " + shape_str(s.shape()));
    out.push_back(s.data()[0]);
  }
  return make_op(
      {static_cast<int>(scalars.size())}, std::move(out), scalars,
      [](detail::TensorNode& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          auto& par = *self.parents[p];
          if (!par.requires_grad) continue;
          par.ensure_grad();
          par.grad[0] += self.grad[p];
        }
      },
      "stack_scalars");
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  check_rank(table, 2, "embedding_rows");
  if (ids.empty()) fail("embedding_rows: empty id list");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      fail("embedding_rows: id " + std::to_string(id) + " out of range for table " +
           shape_str(table.shape()));
  const auto& tv = table.data();
  const int n = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] =
          tv[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d + j];
  std::vector<int> ids_copy = ids;
  return make_op(
      {n, d}, std::move(out), {table},
      [ids_copy, d](detail::TensorNode& self) {
        auto& pt = *self.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (std::size_t i = 0; i < ids_copy.size(); ++i)
          for (int j = 0; j < d; ++j)
            pt.grad[static_cast<std::size_t>(ids_copy[i]) * d + j] +=
                self.grad[i * static_cast<std::size_t>(d) + j];
      },
      "embedding_rows");
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return make_op(
      {}, {acc}, {a},
      [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0];
        for (auto& x : pa.grad) x += g;
      },
      "sum");
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return make_op(
      {}, {acc * inv}, {a},
      [inv](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0] * inv;
        for (auto& x : pa.grad) x += g;
      },
      "mean_all");
}

Tensor mean_rows(const Tensor& m) {
  check_rank(m, 2, "mean_rows");
  const int n = m.dim(0), d = m.dim(1);
  const auto& mv = m.data();
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += mv[static_cast<std::size_t>(i) * d + j];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& x : out) x *= inv;
  return make_op(
      {d}, std::move(out), {m},
      [n, d, inv](detail::TensorNode& self) {
        auto& pm = *self.parents[0];
        if (!pm.requires_grad) return;
        pm.ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            pm.grad[static_cast<std::size_t>(i) * d + j] += self.grad[static_cast<std::size_t>(j)] * inv;
      },
      "mean_rows");
}

Tensor mean_rows_subset(const Tensor& m, const std::vector<int>& rows) {
  check_rank(m, 2, "mean_rows_subset");
  if (rows.empty()) fail("mean_rows_subset: empty row list");
  const int n = m.dim(0), d = m.dim(1);
  for (int r : rows)
    if (r < 0 || r >= n)
      fail("mean_rows_subset: row " + std::to_string(r) + " out of range for " +
           shape_str(m.shape()));
  const auto& mv = m.data();
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int r : rows)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += mv[static_cast<std::size_t>(r) * d + j];
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto& x : out) x *= inv;
  std::vector<int> rows_copy = rows;
  return make_op(
      {d}, std::move(out), {m},
      [rows_copy, d, inv](detail::TensorNode& self) {
        auto& pm = *self.parents[0];
        if (!pm.requires_grad) return;
        pm.ensure_grad();
        for (int r : rows_copy)
          for (int j = 0; j < d; ++j)
            pm.grad[static_cast<std::size_t>(r) * d + j] += self.grad[static_cast<std::size_t>(j)] * inv;
      },
      "mean_rows_subset");
}

Tensor log_sum_exp(const Tensor& v) {
  check_rank(v, 1, "log_sum_exp");
  const auto& vv = v.data();
  double m = vv[0];
  for (double x : vv) m = std::max(m, x);
  double s = 0.0;
  for (double x : vv) s += std::exp(x - m);
  const double lse = m + std::log(s);
  return make_op(
      {}, {lse}, {v},
      [lse](detail::TensorNode& self) {
        auto& pv = *self.parents[0];
        if (!pv.requires_grad) return;
        pv.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < pv.data.size(); ++i)
          pv.grad[i] += g * std::exp(pv.data[i] - lse);
      },
      "log_sum_exp");
}

// ---- nonlinear blocks ----

namespace {

void check_finite(const Tensor& x, const char* op) {
  for (double v : x.data())
    if (!std::isfinite(v)) fail(std::string(op) + ": non-finite input");
}

// Softmax over contiguous slices described by (outer, n, inner) strides.
Tensor softmax_impl(const Tensor& x, int axis) {
  check_finite(x, "softmax");
  const auto& shape = x.shape();
  if (axis < 0 || axis >= x.rank())
    fail("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  for (int i = axis + 1; i < x.rank(); ++i)
    inner *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  const std::size_t n = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double m = xv[base];
      for (std::size_t k = 1; k < n; ++k) m = std::max(m, xv[base + k * inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(xv[base + k * inner] - m);
        out[base + k * inner] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] *= inv;
    }
  }
  return make_op(
      x.shape(), std::move(out), {x},
      [outer, n, inner](detail::TensorNode& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k)
              dot += self.grad[base + k * inner] * self.data[base + k * inner];
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t idx = base + k * inner;
              px.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) { return softmax_impl(x, axis); }

Tensor softmax_rows(const Tensor& x) {
  check_rank(x, 2, "softmax_rows");
  return softmax_impl(x, 1);
}

Tensor causal_softmax_rows(const Tensor& scores) {
  check_rank(scores, 2, "causal_softmax_rows");
  const int t = scores.dim(0);
  if (scores.dim(1) != t)
    fail("causal_softmax_rows: expected square matrix, got " + shape_str(scores.shape()));
  check_finite(scores, "causal_softmax_rows");
  const auto& sv = scores.data();
  std::vector<double> out(sv.size(), 0.0);
  for (int i = 0; i < t; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * t;
    double m = sv[base];
    for (int j = 1; j <= i; ++j) m = std::max(m, sv[base + static_cast<std::size_t>(j)]);
    double s = 0.0;
    for (int j = 0; j <= i; ++j) {
      const double e = std::exp(sv[base + static_cast<std::size_t>(j)] - m);
      out[base + static_cast<std::size_t>(j)] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int j = 0; j <= i; ++j) out[base + static_cast<std::size_t>(j)] *= inv;
  }
  return make_op(
      scores.shape(), std::move(out), {scores},
      [t](detail::TensorNode& self) {
        auto& ps = *self.parents[0];
        if (!ps.requires_grad) return;
        ps.ensure_grad();
        for (int i = 0; i < t; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * t;
          double dot = 0.0;
          for (int j = 0; j <= i; ++j)
            dot += self.grad[base + static_cast<std::size_t>(j)] *
                   self.data[base + static_cast<std::size_t>(j)];
          for (int j = 0; j <= i; ++j) {
            const std::size_t idx = base + static_cast<std::size_t>(j);
            ps.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
          }
        }
      },
      "causal_softmax_rows");
}

Tensor rms_norm_rows(const Tensor& m, const Tensor& gain) {
  check_rank(m, 2, "rms_norm_rows");
  check_rank(gain, 1, "rms_norm_rows");
  const int n = m.dim(0), d = m.dim(1);
  if (gain.dim(0) != d)
    fail("rms_norm_rows: gain shape mismatch " + shape_str(m.shape()) + " vs " +
         shape_str(gain.shape()));
  constexpr double kEps = 1e-8;
  const auto& mv = m.data();
  const auto& gv = gain.data();
  std::vector<double> out(mv.size());
  std::vector<double> rinv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = mv.data() + static_cast<std::size_t>(i) * d;
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += row[j] * row[j];
    ms = ms / d + kEps;
    const double ri = 1.0 / std::sqrt(ms);
    rinv[static_cast<std::size_t>(i)] = ri;
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] = gv[static_cast<std::size_t>(j)] * row[j] * ri;
  }
  return make_op(
      m.shape(), std::move(out), {m, gain},
      [n, d, rinv](detail::TensorNode& self) {
        auto& pm = *self.parents[0];
        auto& pg = *self.parents[1];
        for (int i = 0; i < n; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * d;
          const double ri = rinv[static_cast<std::size_t>(i)];
          if (pg.requires_grad) {
            pg.ensure_grad();
            for (int j = 0; j < d; ++j)
              pg.grad[static_cast<std::size_t>(j)] +=
                  self.grad[base + static_cast<std::size_t>(j)] * pm.data[base + static_cast<std::size_t>(j)] * ri;
          }
          if (pm.requires_grad) {
            pm.ensure_grad();
            // du = g * gain; dx = du*ri - x * ri^3/d * (du . x)
            double dot = 0.0;
            for (int j = 0; j < d; ++j)
              dot += self.grad[base + static_cast<std::size_t>(j)] *
                     pg.data[static_cast<std::size_t>(j)] * pm.data[base + static_cast<std::size_t>(j)];
            const double c = dot * ri * ri * ri / d;
            for (int j = 0; j < d; ++j)
              pm.grad[base + static_cast<std::size_t>(j)] +=
                  self.grad[base + static_cast<std::size_t>(j)] * pg.data[static_cast<std::size_t>(j)] * ri -
                  pm.data[base + static_cast<std::size_t>(j)] * c;
          }
        }
      },
      "rms_norm_rows");
}

// ---- losses ----

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id) {
  check_rank(logits, 2, "cross_entropy");
  const int t = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != t)
    fail("cross_entropy: target count " + std::to_string(targets.size()) +
         " does not match logits " + shape_str(logits.shape()));
  std::vector<int> valid;
  for (int i = 0; i < t; ++i) {
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt == ignore_id) continue;
    if (tgt < 0 || tgt >= v)
      fail("cross_entropy: target " + std::to_string(tgt) + " out of range for vocab " +
           std::to_string(v));
    valid.push_back(i);
  }
  if (valid.empty()) fail("cross_entropy: empty batch (all positions ignored)");
  const auto& lv = logits.data();
  // Per-row stabilized softmax probabilities are kept for the backward pass.
  std::vector<double> probs(valid.size() * static_cast<std::size_t>(v));
  double loss = 0.0;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    const int i = valid[k];
    const double* row = lv.data() + static_cast<std::size_t>(i) * v;
    double m = row[0];
    for (int j = 1; j < v; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < v; ++j) {
      const double e = std::exp(row[j] - m);
      probs[k * static_cast<std::size_t>(v) + static_cast<std::size_t>(j)] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < v; ++j) probs[k * static_cast<std::size_t>(v) + static_cast<std::size_t>(j)] *= inv;
    const double lse = m + std::log(s);
    loss += lse - row[targets[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(valid.size());
  std::vector<int> tg = targets;
  return make_op(
      {}, {loss}, {logits},
      [valid, tg, v, probs](detail::TensorNode& self) {
        auto& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const double g = self.grad[0] / static_cast<double>(valid.size());
        for (std::size_t k = 0; k < valid.size(); ++k) {
          const int i = valid[k];
          double* row = pl.grad.data() + static_cast<std::size_t>(i) * v;
          const double* p = probs.data() + k * static_cast<std::size_t>(v);
          for (int j = 0; j < v; ++j) row[j] += g * p[j];
          row[tg[static_cast<std::size_t>(i)]] -= g;
        }
      },
      "cross_entropy");
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  check_rank(a, 1, "cosine_similarity");
  check_rank(b, 1, "cosine_similarity");
  check_same_shape(a, b, "cosine_similarity");
  const auto& av = a.data();
  const auto& bv = b.data();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  if (na2 == 0.0 || nb2 == 0.0) fail("cosine_similarity: zero-norm vector");
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double c = dot / (na * nb);
  return make_op(
      {}, {c}, {a, b},
      [na, nb, c](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double g = self.grad[0];
        const double inv = 1.0 / (na * nb);
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < pa.data.size(); ++i)
            pa.grad[i] += g * (pb.data[i] * inv - c * pa.data[i] / (na * na));
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < pb.data.size(); ++i)
            pb.grad[i] += g * (pa.data[i] * inv - c * pb.data[i] / (nb * nb));
        }
      },
      "cosine_similarity");
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined()) fail("backward: undefined tensor");
  if (loss.numel() != 1)
    fail("backward: root must be scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS: parents first, then the node itself.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent].get();
      ++f.next_parent;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace cap
