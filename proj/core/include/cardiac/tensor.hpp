#pragma once

// Minimal reverse-mode autodiff over dense tensors. Shapes are explicit;
// the only broadcasting is scalar-times-tensor. Forward ops build a graph of
// shared nodes; backward() walks it once in reverse topological order and
// accumulates into .grad of every node that requires it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "cardiac/errors.hpp"
#include "cardiac/rng.hpp"

namespace cardiac {

namespace detail {

template <class T>
struct TensorNode {
  std::vector<int> dims;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // reads this->grad, writes parents' grad

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

inline size_t count(const std::vector<int>& dims) {
  size_t n = 1;
  for (int d : dims) n *= static_cast<size_t>(d);
  return n;
}

inline std::string dims_str(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << "]";
  return os.str();
}

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  explicit Tensor(std::vector<int> dims, bool requires_grad = false) {
    for (int d : dims)
      if (d <= 0) throw ShapeError("tensor extent must be positive, got " + detail::dims_str(dims));
    node_ = std::make_shared<Node>();
    node_->dims = std::move(dims);
    node_->data.assign(detail::count(node_->dims), T(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

  static Tensor full(std::vector<int> dims, T value) {
    Tensor t(std::move(dims));
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from(std::vector<int> dims, std::vector<T> data, bool requires_grad = false) {
    Tensor t(std::move(dims), requires_grad);
    if (data.size() != t.size())
      throw ShapeError("data length does not match dims " + detail::dims_str(t.dims()));
    t.node_->data = std::move(data);
    return t;
  }

  // Uniform(-a, a) leaf, a = sqrt(1/fan_in).
  static Tensor init_uniform(std::vector<int> dims, int fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(dims), true);
    double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (auto& v : t.node_->data) v = static_cast<T>(uniform_range(rng, -a, a));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& dims() const { return node_->dims; }
  int dim(int i) const { return node_->dims[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->dims.size()); }
  size_t size() const { return node_->data.size(); }

  T* data() { return node_->data.data(); }
  const T* data() const { return node_->data.data(); }
  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  T item() const {
    if (size() != 1) throw ContractError("item() requires a scalar tensor, got " + detail::dims_str(dims()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  // Leaf copy of this tensor's values (no graph history).
  Tensor clone_leaf(bool requires_grad) const {
    Tensor t(node_->dims, requires_grad);
    t.node_->data = node_->data;
    return t;
  }

  void backward() {
    if (size() != 1) throw ContractError("backward() requires a scalar root");
    // reverse topological order: root first, leaves last
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    std::reverse(order.begin(), order.end());  // root first
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (Node* n : order)
      if (n->backprop) n->backprop(*n);
  }

  std::shared_ptr<Node> node() const { return node_; }

  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <class T>
std::shared_ptr<TensorNode<T>> make_result(std::vector<int> dims,
                                           std::vector<std::shared_ptr<TensorNode<T>>> parents) {
  auto n = std::make_shared<TensorNode<T>>();
  n->dims = std::move(dims);
  n->data.assign(count(n->dims), T(0));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(op) + ": shape mismatch " + detail::dims_str(a.dims()) + " vs " +
                     detail::dims_str(b.dims()));
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  auto n = detail::make_result<T>(a.dims(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] + b.data()[i];
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  auto n = detail::make_result<T>(a.dims(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] - b.data()[i];
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  auto n = detail::make_result<T>(a.dims(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * b.data()[i];
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "div");
  auto n = detail::make_result<T>(a.dims(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] / b.data()[i];
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->data[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          pb->grad[i] -= self.grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * c;
  if (n->requires_grad)
    n->backprop = [c](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] + c;
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = std::tanh(a.data()[i]);
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * (T(1) - self.data[i] * self.data[i]);
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = T(1) / (T(1) + std::exp(-a.data()[i]));
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * self.data[i] * (T(1) - self.data[i]);
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& a) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = std::sqrt(a.data()[i]);
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] / (T(2) * self.data[i]);
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto n = detail::make_result<T>({1}, {a.node()});
  T s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i];
  n->data[0] = s;
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += self.grad[0];
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// softmax / losses

// Softmax over the flattened elements; input must be nonempty (enforced by
// construction, tensors have no zero extents).
template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  const size_t k = a.size();
  T m = a.data()[0];
  for (size_t i = 1; i < k; ++i) m = std::max(m, a.data()[i]);
  T z = 0;
  for (size_t i = 0; i < k; ++i) {
    n->data[i] = std::exp(a.data()[i] - m);
    z += n->data[i];
  }
  for (size_t i = 0; i < k; ++i) n->data[i] /= z;
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      T dot = 0;
      for (size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.data[i];
      for (size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.data[i] * (self.grad[i] - dot);
    };
  return Tensor<T>::wrap(n);
}

// Row-wise softmax on a 2-D tensor.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("softmax_rows: expected 2-D input");
  const int rows = a.dim(0), cols = a.dim(1);
  auto n = detail::make_result<T>(a.dims(), {a.node()});
  for (int r = 0; r < rows; ++r) {
    const T* x = a.data() + static_cast<size_t>(r) * cols;
    T* y = n->data.data() + static_cast<size_t>(r) * cols;
    T m = x[0];
    for (int j = 1; j < cols; ++j) m = std::max(m, x[j]);
    T z = 0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - m);
      z += y[j];
    }
    for (int j = 0; j < cols; ++j) y[j] /= z;
  }
  if (n->requires_grad)
    n->backprop = [rows, cols](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const T* y = self.data.data() + static_cast<size_t>(r) * cols;
        const T* dy = self.grad.data() + static_cast<size_t>(r) * cols;
        T* dx = p->grad.data() + static_cast<size_t>(r) * cols;
        T dot = 0;
        for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
        for (int j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    };
  return Tensor<T>::wrap(n);
}

// -log softmax(logits)[label], stabilized by max subtraction.
template <class T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, int label) {
  const int k = static_cast<int>(logits.size());
  if (label < 0 || label >= k)
    throw ValidationError("cross_entropy_from_logits: label " + std::to_string(label) +
                          " out of range [0," + std::to_string(k) + ")");
  auto n = detail::make_result<T>({1}, {logits.node()});
  T m = logits.data()[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits.data()[i]);
  T z = 0;
  for (int i = 0; i < k; ++i) z += std::exp(logits.data()[i] - m);
  n->data[0] = std::log(z) + m - logits.data()[label];
  if (n->requires_grad)
    n->backprop = [label, m, z](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const T g = self.grad[0];
      for (size_t i = 0; i < p->data.size(); ++i) {
        T soft = std::exp(p->data[i] - m) / z;
        p->grad[i] += g * (soft - (static_cast<int>(i) == label ? T(1) : T(0)));
      }
    };
  return Tensor<T>::wrap(n);
}

enum class LossKind { mae, mse, smooth_l1, huber };

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mae") return LossKind::mae;
  if (s == "mse") return LossKind::mse;
  if (s == "smooth_l1") return LossKind::smooth_l1;
  if (s == "huber") return LossKind::huber;
  throw ConfigError("unknown regression loss kind: " + s);
}

inline std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::mae: return "mae";
    case LossKind::mse: return "mse";
    case LossKind::smooth_l1: return "smooth_l1";
    case LossKind::huber: return "huber";
  }
  return "?";
}

// Scalar regression loss against a constant target. MAE uses subgradient 0 at
// the kink. smooth_l1 and huber share the threshold parameter (default 1).
template <class T>
Tensor<T> regression_loss(const Tensor<T>& pred, T target, LossKind kind, T delta = T(1)) {
  if (pred.size() != 1) throw ShapeError("regression_loss: pred must be scalar");
  auto n = detail::make_result<T>({1}, {pred.node()});
  const T e = pred.data()[0] - target;
  const T ae = std::abs(e);
  T value = 0, deriv = 0;
  switch (kind) {
    case LossKind::mae:
      value = ae;
      deriv = e > 0 ? T(1) : (e < 0 ? T(-1) : T(0));
      break;
    case LossKind::mse:
      value = e * e;
      deriv = T(2) * e;
      break;
    case LossKind::smooth_l1:
      if (ae < delta) {
        value = T(0.5) * e * e / delta;
        deriv = e / delta;
      } else {
        value = ae - T(0.5) * delta;
        deriv = e > 0 ? T(1) : T(-1);
      }
      break;
    case LossKind::huber:
      if (ae <= delta) {
        value = T(0.5) * e * e;
        deriv = e;
      } else {
        value = delta * (ae - T(0.5) * delta);
        deriv = e > 0 ? delta : -delta;
      }
      break;
  }
  n->data[0] = value;
  if (n->requires_grad)
    n->backprop = [deriv](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      p->grad[0] += self.grad[0] * deriv;
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected 2-D operands, got " + detail::dims_str(a.dims()) + " and " +
                     detail::dims_str(b.dims()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), nn = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dims disagree " + detail::dims_str(a.dims()) + " x " +
                     detail::dims_str(b.dims()));
  auto n = detail::make_result<T>({m, nn}, {a.node(), b.node()});
  const T* A = a.data();
  const T* B = b.data();
  T* C = n->data.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const T av = A[static_cast<size_t>(i) * k + p];
      const T* brow = B + static_cast<size_t>(p) * nn;
      T* crow = C + static_cast<size_t>(i) * nn;
      for (int j = 0; j < nn; ++j) crow[j] += av * brow[j];
    }
  if (n->requires_grad)
    n->backprop = [m, k, nn](detail::TensorNode<T>& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const T* dC = self.grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        // dA = dC * B^T
        const T* B = pb->data.data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nn; ++j) {
            const T g = dC[static_cast<size_t>(i) * nn + j];
            const T* brow = B;
            T* darow = pa->grad.data() + static_cast<size_t>(i) * k;
            for (int p = 0; p < k; ++p) darow[p] += g * brow[static_cast<size_t>(p) * nn + j];
          }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        // dB = A^T * dC
        const T* A = pa->data.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const T av = A[static_cast<size_t>(i) * k + p];
            const T* drow = dC + static_cast<size_t>(i) * nn;
            T* dbrow = pb->grad.data() + static_cast<size_t>(p) * nn;
            for (int j = 0; j < nn; ++j) dbrow[j] += av * drow[j];
          }
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected 2-D input");
  const int m = a.dim(0), nn = a.dim(1);
  auto n = detail::make_result<T>({nn, m}, {a.node()});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < nn; ++j)
      n->data[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * nn + j];
  if (n->requires_grad)
    n->backprop = [m, nn](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j)
          p->grad[static_cast<size_t>(i) * nn + j] += self.grad[static_cast<size_t>(j) * m + i];
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> dims) {
  if (detail::count(dims) != a.size())
    throw ShapeError("reshape: element count mismatch " + detail::dims_str(a.dims()) + " -> " +
                     detail::dims_str(dims));
  auto n = detail::make_result<T>(std::move(dims), {a.node()});
  n->data = a.values();
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor<T>::wrap(n);
}

// Single row of a 2-D tensor as a 1 x C tensor.
template <class T>
Tensor<T> row(const Tensor<T>& a, int r) {
  if (a.rank() != 2) throw ShapeError("row: expected 2-D input");
  const int rows = a.dim(0), cols = a.dim(1);
  if (r < 0 || r >= rows) throw ShapeError("row: index out of range");
  auto n = detail::make_result<T>({1, cols}, {a.node()});
  std::copy_n(a.data() + static_cast<size_t>(r) * cols, cols, n->data.begin());
  if (n->requires_grad)
    n->backprop = [r, cols](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int j = 0; j < cols; ++j) p->grad[static_cast<size_t>(r) * cols + j] += self.grad[j];
    };
  return Tensor<T>::wrap(n);
}

// Stack B tensors (each 1 x C or flat C) into a B x C matrix.
template <class T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows_in) {
  if (rows_in.empty()) throw ContractError("stack_rows: empty input");
  const size_t cols = rows_in[0].size();
  std::vector<std::shared_ptr<detail::TensorNode<T>>> parents;
  parents.reserve(rows_in.size());
  for (const auto& r : rows_in) {
    if (r.size() != cols) throw ShapeError("stack_rows: row length mismatch");
    parents.push_back(r.node());
  }
  auto n = detail::make_result<T>({static_cast<int>(rows_in.size()), static_cast<int>(cols)},
                                  std::move(parents));
  for (size_t i = 0; i < rows_in.size(); ++i)
    std::copy_n(rows_in[i].data(), cols, n->data.begin() + i * cols);
  if (n->requires_grad)
    n->backprop = [cols](detail::TensorNode<T>& self) {
      for (size_t i = 0; i < self.parents.size(); ++i) {
        auto& p = self.parents[i];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (size_t j = 0; j < cols; ++j) p->grad[j] += self.grad[i * cols + j];
      }
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// spatial ops (tensors are C x H x W)

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, int stride, int padding) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be C x H x W");
  if (kernels.rank() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3)
    throw ShapeError("conv2d: kernels must be Cout x Cin x 3 x 3");
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  if (padding != 0 && padding != 1) throw ShapeError("conv2d: padding must be 0 or 1");
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (kernels.dim(1) != cin) throw ShapeError("conv2d: channel mismatch");
  const int cout = kernels.dim(0);
  auto out_extent = [&](int e) {
    const int num = e + 2 * padding - 3;
    // floor division; num may be negative for tiny inputs
    return (num >= 0 ? num / stride : -((-num + stride - 1) / stride)) + 1;
  };
  const int ho = out_extent(h);
  const int wo = out_extent(w);
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: output extent < 1");

  auto n = detail::make_result<T>({cout, ho, wo}, {input.node(), kernels.node()});
  const T* in = input.data();
  const T* ker = kernels.data();
  T* out = n->data.data();
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T kv = ker[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= h) continue;
            const T* irow = in + (static_cast<size_t>(ci) * h + iy) * w;
            T* orow = out + (static_cast<size_t>(co) * ho + oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - padding;
              if (ix < 0 || ix >= w) continue;
              orow[ox] += kv * irow[ix];
            }
          }
        }
  if (n->requires_grad)
    n->backprop = [stride, padding, cin, cout, h, w, ho, wo](detail::TensorNode<T>& self) {
      auto& pin = self.parents[0];
      auto& pker = self.parents[1];
      const T* dout = self.grad.data();
      if (pin->requires_grad) {
        pin->ensure_grad();
        const T* ker = pker->data.data();
        for (int co = 0; co < cout; ++co)
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const T kv = ker[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy * stride + ky - padding;
                  if (iy < 0 || iy >= h) continue;
                  T* dirow = pin->grad.data() + (static_cast<size_t>(ci) * h + iy) * w;
                  const T* dorow = dout + (static_cast<size_t>(co) * ho + oy) * wo;
                  for (int ox = 0; ox < wo; ++ox) {
                    const int ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= w) continue;
                    dirow[ix] += kv * dorow[ox];
                  }
                }
              }
      }
      if (pker->requires_grad) {
        pker->ensure_grad();
        const T* in = pin->data.data();
        for (int co = 0; co < cout; ++co)
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                T acc = 0;
                for (int oy = 0; oy < ho; ++oy) {
                  const int iy = oy * stride + ky - padding;
                  if (iy < 0 || iy >= h) continue;
                  const T* irow = in + (static_cast<size_t>(ci) * h + iy) * w;
                  const T* dorow = dout + (static_cast<size_t>(co) * ho + oy) * wo;
                  for (int ox = 0; ox < wo; ++ox) {
                    const int ix = ox * stride + kx - padding;
                    if (ix < 0 || ix >= w) continue;
                    acc += irow[ix] * dorow[ox];
                  }
                }
                pker->grad[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] += acc;
              }
      }
    };
  return Tensor<T>::wrap(n);
}

// Per-channel bias added across the spatial map.
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 3) throw ShapeError("add_channel_bias: input must be C x H x W");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (static_cast<int>(b.size()) != c) throw ShapeError("add_channel_bias: bias length mismatch");
  auto n = detail::make_result<T>(x.dims(), {x.node(), b.node()});
  const size_t hw = static_cast<size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const T bv = b.data()[ci];
    for (size_t i = 0; i < hw; ++i) n->data[ci * hw + i] = x.data()[ci * hw + i] + bv;
  }
  if (n->requires_grad)
    n->backprop = [c, hw](detail::TensorNode<T>& self) {
      auto& px = self.parents[0];
      auto& pb = self.parents[1];
      if (px->requires_grad) {
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
          T acc = 0;
          for (size_t i = 0; i < hw; ++i) acc += self.grad[ci * hw + i];
          pb->grad[ci] += acc;
        }
      }
    };
  return Tensor<T>::wrap(n);
}

// Non-overlapping window average pooling.
template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int window) {
  if (x.rank() != 3) throw ShapeError("avg_pool2d: input must be C x H x W");
  if (window < 1) throw ShapeError("avg_pool2d: window must be >= 1");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % window != 0 || w % window != 0)
    throw ShapeError("avg_pool2d: extents not divisible by window");
  const int ho = h / window, wo = w / window;
  auto n = detail::make_result<T>({c, ho, wo}, {x.node()});
  const T inv = T(1) / static_cast<T>(window * window);
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx)
            acc += x.data()[(static_cast<size_t>(ci) * h + oy * window + dy) * w + ox * window + dx];
        n->data[(static_cast<size_t>(ci) * ho + oy) * wo + ox] = acc * inv;
      }
  if (n->requires_grad)
    n->backprop = [c, h, w, ho, wo, window, inv](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const T g = self.grad[(static_cast<size_t>(ci) * ho + oy) * wo + ox] * inv;
            for (int dy = 0; dy < window; ++dy)
              for (int dx = 0; dx < window; ++dx)
                p->grad[(static_cast<size_t>(ci) * h + oy * window + dy) * w + ox * window + dx] += g;
          }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool: input must be C x H x W");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto n = detail::make_result<T>({c}, {x.node()});
  const size_t hw = static_cast<size_t>(h) * w;
  const T inv = T(1) / static_cast<T>(hw);
  for (int ci = 0; ci < c; ++ci) {
    T acc = 0;
    for (size_t i = 0; i < hw; ++i) acc += x.data()[ci * hw + i];
    n->data[ci] = acc * inv;
  }
  if (n->requires_grad)
    n->backprop = [c, hw, inv](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        const T g = self.grad[ci] * inv;
        for (size_t i = 0; i < hw; ++i) p->grad[ci * hw + i] += g;
      }
    };
  return Tensor<T>::wrap(n);
}

// Spatial crop: rows [y0, y0+h), cols [x0, x0+w) of every channel.
template <class T>
Tensor<T> slice_spatial(const Tensor<T>& x, int y0, int x0, int h, int w) {
  if (x.rank() != 3) throw ShapeError("slice_spatial: input must be C x H x W");
  const int c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (y0 < 0 || x0 < 0 || y0 + h > H || x0 + w > W)
    throw ShapeError("slice_spatial: window out of bounds");
  auto n = detail::make_result<T>({c, h, w}, {x.node()});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      std::copy_n(x.data() + (static_cast<size_t>(ci) * H + y0 + y) * W + x0, w,
                  n->data.begin() + (static_cast<size_t>(ci) * h + y) * w);
  if (n->requires_grad)
    n->backprop = [c, H, W, y0, x0, h, w](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            p->grad[(static_cast<size_t>(ci) * H + y0 + y) * W + x0 + xx] +=
                self.grad[(static_cast<size_t>(ci) * h + y) * w + xx];
    };
  return Tensor<T>::wrap(n);
}

// Place four equally shaped maps as quadrants (row-major: tl, tr, bl, br).
template <class T>
Tensor<T> assemble_quadrants(const Tensor<T>& tl, const Tensor<T>& tr, const Tensor<T>& bl,
                             const Tensor<T>& br) {
  for (const Tensor<T>* t : {&tr, &bl, &br}) check_same_shape(tl, *t, "assemble_quadrants");
  if (tl.rank() != 3) throw ShapeError("assemble_quadrants: maps must be C x h x w");
  const int c = tl.dim(0), h = tl.dim(1), w = tl.dim(2);
  auto n = detail::make_result<T>({c, 2 * h, 2 * w},
                                  {tl.node(), tr.node(), bl.node(), br.node()});
  const Tensor<T>* tiles[4] = {&tl, &tr, &bl, &br};
  for (int q = 0; q < 4; ++q) {
    const int oy = (q / 2) * h, ox = (q % 2) * w;
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        std::copy_n(tiles[q]->data() + (static_cast<size_t>(ci) * h + y) * w, w,
                    n->data.begin() + (static_cast<size_t>(ci) * 2 * h + oy + y) * 2 * w + ox);
  }
  if (n->requires_grad)
    n->backprop = [c, h, w](detail::TensorNode<T>& self) {
      for (int q = 0; q < 4; ++q) {
        auto& p = self.parents[q];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        const int oy = (q / 2) * h, ox = (q % 2) * w;
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              p->grad[(static_cast<size_t>(ci) * h + y) * w + xx] +=
                  self.grad[(static_cast<size_t>(ci) * 2 * h + oy + y) * 2 * w + ox + xx];
      }
    };
  return Tensor<T>::wrap(n);
}

// 2x nearest-neighbour upsampling: every pixel replicated into a 2x2 block.
template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("upsample_nearest2x: input must be C x H x W");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto n = detail::make_result<T>({c, 2 * h, 2 * w}, {x.node()});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        n->data[(static_cast<size_t>(ci) * 2 * h + y) * 2 * w + xx] =
            x.data()[(static_cast<size_t>(ci) * h + y / 2) * w + xx / 2];
  if (n->requires_grad)
    n->backprop = [c, h, w](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            p->grad[(static_cast<size_t>(ci) * h + y / 2) * w + xx / 2] +=
                self.grad[(static_cast<size_t>(ci) * 2 * h + y) * 2 * w + xx];
    };
  return Tensor<T>::wrap(n);
}

// 2x bilinear upsampling, align_corners = false.
template <class T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("upsample_bilinear2x: input must be C x H x W");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int H = 2 * h, W = 2 * w;
  // Precompute the 1-D interpolation stencil once per axis extent.
  auto stencil = [](int out, int in) {
    std::vector<std::tuple<int, int, T>> s(static_cast<size_t>(out));  // (i0, i1, w1)
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) / 2.0 - 0.5;
      double f = std::floor(src);
      int i0 = std::clamp(static_cast<int>(f), 0, in - 1);
      int i1 = std::clamp(i0 + 1, 0, in - 1);
      T w1 = static_cast<T>(src - f);
      if (src < 0) { i0 = i1 = 0; w1 = 0; }
      s[static_cast<size_t>(o)] = {i0, i1, w1};
    }
    return s;
  };
  auto sy = stencil(H, h);
  auto sx = stencil(W, w);
  auto n = detail::make_result<T>({c, H, W}, {x.node()});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < H; ++y) {
      auto [y0, y1, wy] = sy[static_cast<size_t>(y)];
      const T* r0 = x.data() + (static_cast<size_t>(ci) * h + y0) * w;
      const T* r1 = x.data() + (static_cast<size_t>(ci) * h + y1) * w;
      T* out = n->data.data() + (static_cast<size_t>(ci) * H + y) * W;
      for (int xx = 0; xx < W; ++xx) {
        auto [x0, x1, wx] = sx[static_cast<size_t>(xx)];
        out[xx] = (T(1) - wy) * ((T(1) - wx) * r0[x0] + wx * r0[x1]) +
                  wy * ((T(1) - wx) * r1[x0] + wx * r1[x1]);
      }
    }
  if (n->requires_grad)
    n->backprop = [c, h, w, H, W, sy, sx](detail::TensorNode<T>& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < H; ++y) {
          auto [y0, y1, wy] = sy[static_cast<size_t>(y)];
          T* g0 = p->grad.data() + (static_cast<size_t>(ci) * h + y0) * w;
          T* g1 = p->grad.data() + (static_cast<size_t>(ci) * h + y1) * w;
          const T* dout = self.grad.data() + (static_cast<size_t>(ci) * H + y) * W;
          for (int xx = 0; xx < W; ++xx) {
            auto [x0, x1, wx] = sx[static_cast<size_t>(xx)];
            const T g = dout[xx];
            g0[x0] += (T(1) - wy) * (T(1) - wx) * g;
            g0[x1] += (T(1) - wy) * wx * g;
            g1[x0] += wy * (T(1) - wx) * g;
            g1[x1] += wy * wx * g;
          }
        }
    };
  return Tensor<T>::wrap(n);
}

}  // namespace cardiac
