// Copyright 2026 The forge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "forge/errors.hpp"

namespace forge::nn {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::string name;  // non-empty for named parameters
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void()> backprop;

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) raise(ErrorCode::ShapeMismatch, "non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace detail

/// Dense 64-bit float array with an optional reverse-mode tape record. Value
/// semantics over a shared node: copies alias the same storage, which is what
/// the tape needs. Row-major layout.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false) {
    const std::size_t n = detail::shape_size(shape);
    if (data.size() != n) {
      raise(ErrorCode::ShapeMismatch,
            "data length " + std::to_string(data.size()) + " does not match shape " +
                detail::shape_str(shape));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    const std::size_t n = detail::shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false) {
    const std::size_t n = detail::shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return node_->size(); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  double value() const {
    if (size() != 1) raise(ErrorCode::ShapeMismatch, "value() needs a scalar tensor");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }

  const std::string& name() const { return node_->name; }
  Tensor& set_name(std::string n) {
    node_->name = std::move(n);
    return *this;
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::vector<double>& grad() {
    if (!has_grad()) {
      raise(ErrorCode::MissingGradient,
            "no gradient on tensor" + (name().empty() ? "" : " '" + name() + "'"));
    }
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    return const_cast<Tensor*>(this)->grad();
  }

  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Reverse pass from a scalar root: topological order over the tape, seed
  /// gradient 1, then each node pushes into its parents.
  void backward() {
    if (size() != 1) {
      raise(ErrorCode::ShapeMismatch, "backward() needs a scalar root");
    }
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [node, next_child] = stack.back();
      if (next_child < node->parents.size()) {
        detail::Node* child = node->parents[next_child++].get();
        if (visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop();
    }
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_op_output(std::vector<int> shape, std::vector<double> value,
                             std::vector<Tensor> inputs,
                             const std::function<void(Node*)>& make_backprop) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  Tensor out(std::move(shape), std::move(value), needs);
  if (needs) {
    Node* raw = out.node().get();
    for (const auto& in : inputs) raw->parents.push_back(in.node());
    make_backprop(raw);
  }
  return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    raise(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
  }
}

// Accumulate src into the grad of one parent if that parent wants it.
inline void add_grad(const std::shared_ptr<Node>& parent, const double* src,
                     std::size_t n) {
  if (!parent->requires_grad) return;
  parent->ensure_grad();
  double* dst = parent->grad.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](detail::Node* n) {
    n->backprop = [n] {
      detail::add_grad(n->parents[0], n->grad.data(), n->size());
      detail::add_grad(n->parents[1], n->grad.data(), n->size());
    };
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](detail::Node* n) {
    n->backprop = [n] {
      detail::add_grad(n->parents[0], n->grad.data(), n->size());
      auto& p = n->parents[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < n->size(); ++i) p->grad[i] -= n->grad[i];
      }
    };
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_op_output(a.shape(), std::move(out), {a, b}, [](detail::Node* n) {
    n->backprop = [n] {
      auto& pa = n->parents[0];
      auto& pb = n->parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n->size(); ++i)
          pa->grad[i] += n->grad[i] * pb->value[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < n->size(); ++i)
          pb->grad[i] += n->grad[i] * pa->value[i];
      }
    };
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return detail::make_op_output(a.shape(), std::move(out), {a}, [c](detail::Node* n) {
    n->backprop = [n, c] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (std::size_t i = 0; i < n->size(); ++i) p->grad[i] += c * n->grad[i];
    };
  });
}

inline Tensor exp_elem(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return detail::make_op_output(a.shape(), std::move(out), {a}, [](detail::Node* n) {
    n->backprop = [n] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (std::size_t i = 0; i < n->size(); ++i)
        p->grad[i] += n->grad[i] * n->value[i];
    };
  });
}

/// Clamp with straight-through gradient strictly inside (lo, hi) and zero
/// outside. The boundary itself is a kink; finite-difference checks must
/// probe away from it.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(a.data()[i], lo, hi);
  return detail::make_op_output(a.shape(), std::move(out), {a}, [lo, hi](detail::Node* n) {
    n->backprop = [n, lo, hi] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (std::size_t i = 0; i < n->size(); ++i) {
        const double v = p->value[i];
        if (v > lo && v < hi) p->grad[i] += n->grad[i];
      }
    };
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i];
  return detail::make_op_output({1}, {s}, {a}, [](detail::Node* n) {
    n->backprop = [n] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const double g = n->grad[0];
      for (auto& v : p->grad) v += g;
    };
  });
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i];
  return detail::make_op_output({1}, {s * inv}, {a}, [inv](detail::Node* n) {
    n->backprop = [n, inv] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      const double g = n->grad[0] * inv;
      for (auto& v : p->grad) v += g;
    };
  });
}

inline Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  if (detail::shape_size(new_shape) != a.size()) {
    raise(ErrorCode::ShapeMismatch, "reshape to " + detail::shape_str(new_shape) +
                                        " from " + detail::shape_str(a.shape()));
  }
  std::vector<double> out(a.values());
  return detail::make_op_output(std::move(new_shape), std::move(out), {a},
                                [](detail::Node* n) {
                                  n->backprop = [n] {
                                    detail::add_grad(n->parents[0], n->grad.data(),
                                                     n->size());
                                  };
                                });
}

/// Swaps the last two axes of a rank-3 tensor: [B,X,Y] -> [B,Y,X].
inline Tensor transpose_12(const Tensor& a) {
  if (a.rank() != 3) raise(ErrorCode::ShapeMismatch, "transpose_12 needs rank 3");
  const int B = a.dim(0), X = a.dim(1), Y = a.dim(2);
  std::vector<double> out(a.size());
  const double* src = a.data();
  for (int b = 0; b < B; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * X * Y;
    for (int x = 0; x < X; ++x) {
      for (int y = 0; y < Y; ++y) {
        out[base + static_cast<std::size_t>(y) * X + x] =
            src[base + static_cast<std::size_t>(x) * Y + y];
      }
    }
  }
  return detail::make_op_output({B, Y, X}, std::move(out), {a},
                                [B, X, Y](detail::Node* n) {
    n->backprop = [n, B, X, Y] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * X * Y;
        for (int y = 0; y < Y; ++y) {
          for (int x = 0; x < X; ++x) {
            p->grad[base + static_cast<std::size_t>(x) * Y + y] +=
                n->grad[base + static_cast<std::size_t>(y) * X + x];
          }
        }
      }
    };
  });
}

}  // namespace forge::nn
