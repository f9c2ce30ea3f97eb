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

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/rng.hpp"
#include "forge/tensor.hpp"

namespace forge::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<RowMat>;
using CMapRowMat = Eigen::Map<const RowMat>;

// Gathers the same-padded sliding windows of x [B,C,L] into a matrix
// [C*k, B*L]: col(c*k+p, b*L+t) = x[b,c,t+p-pad], zero outside the sequence.
inline RowMat im2col(const double* x, int B, int C, int L, int k) {
  const int pad = k / 2;
  RowMat col = RowMat::Zero(static_cast<Eigen::Index>(C) * k,
                            static_cast<Eigen::Index>(B) * L);
  for (int c = 0; c < C; ++c) {
    for (int p = 0; p < k; ++p) {
      const int shift = p - pad;
      double* row = col.data() + (static_cast<std::size_t>(c) * k + p) *
                                     static_cast<std::size_t>(B) * L;
      const int t_lo = std::max(0, -shift);
      const int t_hi = std::min(L, L - shift);
      for (int b = 0; b < B; ++b) {
        const double* src = x + (static_cast<std::size_t>(b) * C + c) * L;
        std::copy(src + t_lo + shift, src + t_hi + shift, row + b * L + t_lo);
      }
    }
  }
  return col;
}

// Adjoint of im2col: scatter-adds G [C*k, B*L] back into y [B,C,L].
inline void col2im_add(const RowMat& G, int B, int C, int L, int k, double* y) {
  const int pad = k / 2;
  for (int c = 0; c < C; ++c) {
    for (int p = 0; p < k; ++p) {
      const int shift = p - pad;
      const double* row = G.data() + (static_cast<std::size_t>(c) * k + p) *
                                         static_cast<std::size_t>(B) * L;
      const int u_lo = std::max(0, shift);
      const int u_hi = std::min(L, L + shift);
      for (int b = 0; b < B; ++b) {
        const double* src = row + b * L;
        double* dst = y + (static_cast<std::size_t>(b) * C + c) * L;
        for (int u = u_lo; u < u_hi; ++u) dst[u] += src[u - shift];
      }
    }
  }
}

// [B,C,L] -> [C, B*L]
inline RowMat to_channel_major(const double* x, int B, int C, int L) {
  RowMat m(C, static_cast<Eigen::Index>(B) * L);
  for (int c = 0; c < C; ++c) {
    double* row = m.data() + static_cast<std::size_t>(c) * B * L;
    for (int b = 0; b < B; ++b) {
      const double* src = x + (static_cast<std::size_t>(b) * C + c) * L;
      std::copy(src, src + L, row + b * L);
    }
  }
  return m;
}

inline void require_odd_kernel(int k) {
  if (k % 2 == 0) {
    raise(ErrorCode::ShapeMismatch, "same-padding needs an odd kernel width");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { RectifiedLinear, Sigmoid };

inline Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.size());
  if (kind == Activation::RectifiedLinear) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  }
  return detail::make_op_output(x.shape(), std::move(out), {x}, [kind](detail::Node* n) {
    n->backprop = [n, kind] {
      auto& p = n->parents[0];
      if (!p->requires_grad) return;
      p->ensure_grad();
      if (kind == Activation::RectifiedLinear) {
        for (std::size_t i = 0; i < n->size(); ++i) {
          if (p->value[i] > 0.0) p->grad[i] += n->grad[i];
        }
      } else {
        for (std::size_t i = 0; i < n->size(); ++i) {
          const double s = n->value[i];
          p->grad[i] += n->grad[i] * s * (1.0 - s);
        }
      }
    };
  });
}

inline Tensor relu(const Tensor& x) { return activation(x, Activation::RectifiedLinear); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor dense_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    raise(ErrorCode::ShapeMismatch, "dense: x " + shape_str(x.shape()) + " vs W " +
                                        shape_str(w.shape()));
  }
  const int R = x.dim(0), n = x.dim(1), m = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != m)) {
    raise(ErrorCode::ShapeMismatch, "dense: bias shape " + shape_str(bias->shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(R) * m);
  {
    CMapRowMat X(x.data(), R, n), W(w.data(), n, m);
    MapRowMat Y(out.data(), R, m);
    Y.noalias() = X * W;
    if (bias) {
      CMapRowMat Bv(bias->data(), 1, m);
      Y.rowwise() += Bv.row(0);
    }
  }
  std::vector<Tensor> inputs = bias ? std::vector<Tensor>{x, w, *bias}
                                    : std::vector<Tensor>{x, w};
  return make_op_output({R, m}, std::move(out), std::move(inputs),
                        [R, n, m](Node* node) {
    node->backprop = [node, R, n, m] {
      auto& px = node->parents[0];
      auto& pw = node->parents[1];
      CMapRowMat dY(node->grad.data(), R, m);
      if (px->requires_grad) {
        px->ensure_grad();
        MapRowMat dX(px->grad.data(), R, n);
        CMapRowMat W(pw->value.data(), n, m);
        dX.noalias() += dY * W.transpose();
      }
      if (pw->requires_grad) {
        pw->ensure_grad();
        MapRowMat dW(pw->grad.data(), n, m);
        CMapRowMat X(px->value.data(), R, n);
        dW.noalias() += X.transpose() * dY;
      }
      if (node->parents.size() > 2 && node->parents[2]->requires_grad) {
        auto& pb = node->parents[2];
        pb->ensure_grad();
        MapRowMat dB(pb->grad.data(), 1, m);
        dB.row(0) += dY.colwise().sum();
      }
    };
  });
}

}  // namespace detail

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return detail::dense_impl(x, w, &bias);
}

inline Tensor dense(const Tensor& x, const Tensor& w) {
  return detail::dense_impl(x, w, nullptr);
}

// ---------------------------------------------------------------------------
// 1D convolution (cross-correlation, stride 1, symmetric zero "same" padding)
// ---------------------------------------------------------------------------

/// x [B,Ci,L], kernels [Co,Ci,k] with k odd, bias [Co] -> [B,Co,L].
inline Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  if (x.rank() != 3 || kernels.rank() != 3 || bias.rank() != 1) {
    raise(ErrorCode::ShapeMismatch, "conv1d: rank mismatch");
  }
  const int B = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const int Co = kernels.dim(0), k = kernels.dim(2);
  detail::require_odd_kernel(k);
  if (kernels.dim(1) != Ci || bias.dim(0) != Co) {
    raise(ErrorCode::ShapeMismatch, "conv1d: x " + detail::shape_str(x.shape()) +
                                        " kernels " + detail::shape_str(kernels.shape()));
  }
  auto col = std::make_shared<detail::RowMat>(detail::im2col(x.data(), B, Ci, L, k));
  detail::CMapRowMat K2d(kernels.data(), Co, static_cast<Eigen::Index>(Ci) * k);
  detail::RowMat Yp = K2d * (*col);  // [Co, B*L]
  std::vector<double> y(static_cast<std::size_t>(B) * Co * L);
  for (int co = 0; co < Co; ++co) {
    const double* src = Yp.data() + static_cast<std::size_t>(co) * B * L;
    const double bv = bias.data()[co];
    for (int b = 0; b < B; ++b) {
      double* dst = y.data() + (static_cast<std::size_t>(b) * Co + co) * L;
      for (int t = 0; t < L; ++t) dst[t] = src[b * L + t] + bv;
    }
  }
  return detail::make_op_output({B, Co, L}, std::move(y), {x, kernels, bias},
                                [col, B, Ci, L, Co, k](detail::Node* n) {
    n->backprop = [n, col, B, Ci, L, Co, k] {
      detail::RowMat dYp(Co, static_cast<Eigen::Index>(B) * L);
      for (int co = 0; co < Co; ++co) {
        double* dst = dYp.data() + static_cast<std::size_t>(co) * B * L;
        for (int b = 0; b < B; ++b) {
          const double* src =
              n->grad.data() + (static_cast<std::size_t>(b) * Co + co) * L;
          std::copy(src, src + L, dst + b * L);
        }
      }
      auto& px = n->parents[0];
      auto& pk = n->parents[1];
      auto& pb = n->parents[2];
      if (pk->requires_grad) {
        pk->ensure_grad();
        detail::MapRowMat dK(pk->grad.data(), Co, static_cast<Eigen::Index>(Ci) * k);
        dK.noalias() += dYp * col->transpose();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int co = 0; co < Co; ++co) pb->grad[co] += dYp.row(co).sum();
      }
      if (px->requires_grad) {
        px->ensure_grad();
        detail::CMapRowMat K2d(pk->value.data(), Co, static_cast<Eigen::Index>(Ci) * k);
        detail::RowMat dcol = K2d.transpose() * dYp;
        detail::col2im_add(dcol, B, Ci, L, k, px->grad.data());
      }
    };
  });
}

/// Transposed 1D convolution: x [B,Cin,L], kernels [Cin,Cout,k], bias [Cout]
/// -> [B,Cout,L]. With bias zero, this is exactly the adjoint of conv1d with
/// the same kernel array: <conv1d(x,K), y> == <x, conv1d_transpose(y,K)>.
inline Tensor conv1d_transpose(const Tensor& x, const Tensor& kernels,
                               const Tensor& bias) {
  if (x.rank() != 3 || kernels.rank() != 3 || bias.rank() != 1) {
    raise(ErrorCode::ShapeMismatch, "conv1d_transpose: rank mismatch");
  }
  const int B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const int Cout = kernels.dim(1), k = kernels.dim(2);
  detail::require_odd_kernel(k);
  if (kernels.dim(0) != Cin || bias.dim(0) != Cout) {
    raise(ErrorCode::ShapeMismatch,
          "conv1d_transpose: x " + detail::shape_str(x.shape()) + " kernels " +
              detail::shape_str(kernels.shape()));
  }
  auto xp = std::make_shared<detail::RowMat>(
      detail::to_channel_major(x.data(), B, Cin, L));
  detail::CMapRowMat Kt(kernels.data(), Cin, static_cast<Eigen::Index>(Cout) * k);
  detail::RowMat G = Kt.transpose() * (*xp);  // [Cout*k, B*L]
  std::vector<double> y(static_cast<std::size_t>(B) * Cout * L, 0.0);
  detail::col2im_add(G, B, Cout, L, k, y.data());
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Cout; ++co) {
      double* dst = y.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
      const double bv = bias.data()[co];
      for (int t = 0; t < L; ++t) dst[t] += bv;
    }
  }
  return detail::make_op_output({B, Cout, L}, std::move(y), {x, kernels, bias},
                                [xp, B, Cin, L, Cout, k](detail::Node* n) {
    n->backprop = [n, xp, B, Cin, L, Cout, k] {
      detail::RowMat dG = detail::im2col(n->grad.data(), B, Cout, L, k);
      auto& px = n->parents[0];
      auto& pk = n->parents[1];
      auto& pb = n->parents[2];
      if (pk->requires_grad) {
        pk->ensure_grad();
        detail::MapRowMat dKt(pk->grad.data(), Cin, static_cast<Eigen::Index>(Cout) * k);
        dKt.noalias() += (*xp) * dG.transpose();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int b = 0; b < B; ++b) {
          for (int co = 0; co < Cout; ++co) {
            const double* src =
                n->grad.data() + (static_cast<std::size_t>(b) * Cout + co) * L;
            double acc = 0.0;
            for (int t = 0; t < L; ++t) acc += src[t];
            pb->grad[co] += acc;
          }
        }
      }
      if (px->requires_grad) {
        px->ensure_grad();
        detail::CMapRowMat Kt(pk->value.data(), Cin,
                              static_cast<Eigen::Index>(Cout) * k);
        detail::RowMat dXp = Kt * dG;  // [Cin, B*L]
        for (int c = 0; c < Cin; ++c) {
          const double* src = dXp.data() + static_cast<std::size_t>(c) * B * L;
          for (int b = 0; b < B; ++b) {
            double* dst =
                px->grad.data() + (static_cast<std::size_t>(b) * Cin + c) * L;
            for (int t = 0; t < L; ++t) dst[t] += src[b * L + t];
          }
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// EMA scan
// ---------------------------------------------------------------------------

/// First-order recurrence y_t = alpha*u_t + (1-alpha)*y_{t-1} per channel,
/// with y_0 = 0 so the scan stays strictly causal. u is [B,L,c], alpha [c].
/// The backward pass runs the reverse recurrence exactly.
inline Tensor ema_scan(const Tensor& u, const Tensor& alpha) {
  if (u.rank() != 3 || alpha.rank() != 1 || alpha.dim(0) != u.dim(2)) {
    raise(ErrorCode::ShapeMismatch, "ema_scan: u " + detail::shape_str(u.shape()) +
                                        " alpha " + detail::shape_str(alpha.shape()));
  }
  const int B = u.dim(0), L = u.dim(1), c = u.dim(2);
  std::vector<double> y(u.size());
  const double* a = alpha.data();
  for (int b = 0; b < B; ++b) {
    const double* ub = u.data() + static_cast<std::size_t>(b) * L * c;
    double* yb = y.data() + static_cast<std::size_t>(b) * L * c;
    for (int j = 0; j < c; ++j) yb[j] = a[j] * ub[j];
    for (int t = 1; t < L; ++t) {
      const double* ut = ub + static_cast<std::size_t>(t) * c;
      double* yt = yb + static_cast<std::size_t>(t) * c;
      const double* yprev = yt - c;
      for (int j = 0; j < c; ++j) yt[j] = a[j] * ut[j] + (1.0 - a[j]) * yprev[j];
    }
  }
  return detail::make_op_output({B, L, c}, std::move(y), {u, alpha},
                                [B, L, c](detail::Node* n) {
    n->backprop = [n, B, L, c] {
      auto& pu = n->parents[0];
      auto& pa = n->parents[1];
      const double* a = pa->value.data();
      const bool want_u = pu->requires_grad;
      const bool want_a = pa->requires_grad;
      if (want_u) pu->ensure_grad();
      if (want_a) pa->ensure_grad();
      std::vector<double> carry(static_cast<std::size_t>(c));
      for (int b = 0; b < B; ++b) {
        std::fill(carry.begin(), carry.end(), 0.0);
        const std::size_t base = static_cast<std::size_t>(b) * L * c;
        for (int t = L - 1; t >= 0; --t) {
          const std::size_t off = base + static_cast<std::size_t>(t) * c;
          for (int j = 0; j < c; ++j) {
            const double g = n->grad[off + j] + carry[j];
            if (want_u) pu->grad[off + j] += a[j] * g;
            if (want_a) {
              const double yprev = t > 0 ? n->value[off - c + j] : 0.0;
              pa->grad[j] += g * (pu->value[off + j] - yprev);
            }
            carry[j] = (1.0 - a[j]) * g;
          }
        }
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Softmax-gated residual fusion
// ---------------------------------------------------------------------------

/// x_hat = x + w0*y_s + w1*y_m + w2*y_l with w = softmax(gate_logits).
inline Tensor conflux_fuse(const Tensor& x, const Tensor& y_s, const Tensor& y_m,
                           const Tensor& y_l, const Tensor& gate_logits) {
  detail::require_same_shape(x, y_s, "conflux_fuse");
  detail::require_same_shape(x, y_m, "conflux_fuse");
  detail::require_same_shape(x, y_l, "conflux_fuse");
  if (gate_logits.rank() != 1 || gate_logits.dim(0) != 3) {
    raise(ErrorCode::ShapeMismatch, "conflux_fuse: gate logits must have shape [3]");
  }
  double w[3];
  {
    const double* l = gate_logits.data();
    const double mx = std::max({l[0], l[1], l[2]});
    double z = 0.0;
    for (int i = 0; i < 3; ++i) {
      w[i] = std::exp(l[i] - mx);
      z += w[i];
    }
    for (int i = 0; i < 3; ++i) w[i] /= z;
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x.data()[i] + w[0] * y_s.data()[i] + w[1] * y_m.data()[i] +
             w[2] * y_l.data()[i];
  }
  const double w0 = w[0], w1 = w[1], w2 = w[2];
  return detail::make_op_output(x.shape(), std::move(out),
                                {x, y_s, y_m, y_l, gate_logits},
                                [w0, w1, w2](detail::Node* n) {
    n->backprop = [n, w0, w1, w2] {
      const double w[3] = {w0, w1, w2};
      detail::add_grad(n->parents[0], n->grad.data(), n->size());
      double s[3] = {0.0, 0.0, 0.0};
      for (int br = 0; br < 3; ++br) {
        auto& py = n->parents[static_cast<std::size_t>(br) + 1];
        const bool want = py->requires_grad;
        if (want) py->ensure_grad();
        for (std::size_t i = 0; i < n->size(); ++i) {
          s[br] += n->grad[i] * py->value[i];
          if (want) py->grad[i] += w[br] * n->grad[i];
        }
      }
      auto& pg = n->parents[4];
      if (pg->requires_grad) {
        pg->ensure_grad();
        const double dot = w[0] * s[0] + w[1] * s[1] + w[2] * s[2];
        for (int i = 0; i < 3; ++i) pg->grad[i] += w[i] * (s[i] - dot);
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean over all elements of (x - x_hat)^2.
inline Tensor mse_loss(const Tensor& x, const Tensor& x_hat) {
  detail::require_same_shape(x, x_hat, "mse_loss");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - x_hat.data()[i];
    s += d * d;
  }
  return detail::make_op_output({1}, {s * inv}, {x, x_hat}, [inv](detail::Node* n) {
    n->backprop = [n, inv] {
      auto& px = n->parents[0];
      auto& ph = n->parents[1];
      const double g = n->grad[0] * 2.0 * inv;
      if (px->requires_grad) px->ensure_grad();
      if (ph->requires_grad) ph->ensure_grad();
      for (std::size_t i = 0; i < px->value.size(); ++i) {
        const double d = px->value[i] - ph->value[i];
        if (px->requires_grad) px->grad[i] += g * d;
        if (ph->requires_grad) ph->grad[i] -= g * d;
      }
    };
  });
}

/// Batch mean of -1/2 * sum_j (1 + logvar - mu^2 - exp(logvar)) for a
/// diagonal Gaussian posterior against the standard normal prior.
inline Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
  detail::require_same_shape(mu, logvar, "kl_loss");
  if (mu.rank() != 2) raise(ErrorCode::ShapeMismatch, "kl_loss needs [B,J]");
  const double inv_b = 1.0 / static_cast<double>(mu.dim(0));
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i];
    const double lv = logvar.data()[i];
    s += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  return detail::make_op_output({1}, {s * inv_b}, {mu, logvar},
                                [inv_b](detail::Node* n) {
    n->backprop = [n, inv_b] {
      auto& pm = n->parents[0];
      auto& pl = n->parents[1];
      const double g = n->grad[0] * inv_b;
      if (pm->requires_grad) {
        pm->ensure_grad();
        for (std::size_t i = 0; i < pm->value.size(); ++i)
          pm->grad[i] += g * pm->value[i];
      }
      if (pl->requires_grad) {
        pl->ensure_grad();
        for (std::size_t i = 0; i < pl->value.size(); ++i)
          pl->grad[i] += g * 0.5 * (std::exp(pl->value[i]) - 1.0);
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

/// Named parameter tensors plus the optimizer's moment accumulators. Names
/// are unique; iteration order (std::map) fixes the update order, which keeps
/// training bitwise reproducible.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Tensor t) {
    if (params_.contains(name)) {
      raise(ErrorCode::InvalidArgument, "duplicate parameter '" + name + "'");
    }
    t.set_requires_grad(true).set_name(name);
    params_.emplace(name, t);
    return t;
  }

  bool contains(const std::string& name) const { return params_.contains(name); }

  Tensor at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      raise(ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
    }
    return it->second;
  }

  const std::map<std::string, Tensor>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::int64_t step() const { return step_; }

  friend void adam_step(ParameterStore& store, double lr, double beta1,
                        double beta2, double eps);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
  std::int64_t step_ = 0;
};

/// Bias-corrected adaptive-moment update over every parameter in the store.
/// Every parameter must carry a gradient (populated by a backward pass).
inline void adam_step(ParameterStore& store, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  for (const auto& [name, t] : store.params_) {
    if (!t.has_grad()) {
      raise(ErrorCode::MissingGradient, "parameter '" + name + "' has no gradient");
    }
  }
  store.step_ += 1;
  const auto t_step = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(beta1, t_step);
  const double bc2 = 1.0 - std::pow(beta2, t_step);
  for (auto& [name, p] : store.params_) {
    auto& m = store.m_[name];
    auto& v = store.v_[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    const std::vector<double>& g = p.grad();
    double* w = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient verification harness
// ---------------------------------------------------------------------------

/// Central-difference check of the backward pass. `f` rebuilds the forward
/// graph from the current parameter values and returns the scalar loss.
/// Returns the max over probed coordinates of |fd - analytic| /
/// max(1e-12, |fd| + |analytic|). Unsupported at kinks (e.g. the rectifier
/// at 0); probe away from them. With max_coords_per_tensor > 0, coordinates
/// are subsampled on a deterministic stride.
inline double gradient_check(const std::function<Tensor()>& f,
                             std::vector<Tensor> params, double eps = 1e-5,
                             std::size_t max_coords_per_tensor = 0) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor out = f();
  out.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));
  }
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const std::size_t n = p.size();
    std::size_t probes = n;
    if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) {
      probes = max_coords_per_tensor;
    }
    for (std::size_t q = 0; q < probes; ++q) {
      const std::size_t idx = probes == n ? q : q * n / probes;
      double* slot = p.data() + idx;
      const double orig = *slot;
      *slot = orig + eps;
      const double fp = f().value();
      *slot = orig - eps;
      const double fm = f().value();
      *slot = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[pi][idx];
      const double rel = std::abs(fd - an) / std::max(1e-12, std::abs(fd) + std::abs(an));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> d(detail::shape_size(shape));
  for (auto& v : d) v = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(d));
}

// ---------------------------------------------------------------------------
// Multi-headed EMA branch
// ---------------------------------------------------------------------------

struct EmaBranchConfig {
  int d_in = 0;
  int d_branch = 0;
  int heads = 0;
  std::vector<double> decay_init;  // one initial decay per head, each in (0,1)

  void validate() const {
    if (d_in < 1 || d_branch < 1 || heads < 1) {
      raise(ErrorCode::InvalidArgument, "EMA branch dimensions must be positive");
    }
    if (d_branch % heads != 0) {
      raise(ErrorCode::ShapeMismatch,
            "d_branch " + std::to_string(d_branch) + " not divisible by " +
                std::to_string(heads) + " heads");
    }
    if (decay_init.size() != static_cast<std::size_t>(heads)) {
      raise(ErrorCode::InvalidArgument, "need one initial decay per head");
    }
    for (double a : decay_init) {
      if (!(a > 0.0 && a < 1.0)) {
        raise(ErrorCode::InvalidArgument, "initial decays must lie in (0,1)");
      }
    }
  }

  /// Heads start at distinct time scales: decays log-spaced across
  /// (0.01, 0.5), fastest head first.
  static EmaBranchConfig make(int d_in, int d_branch, int heads) {
    EmaBranchConfig cfg;
    cfg.d_in = d_in;
    cfg.d_branch = d_branch;
    cfg.heads = heads;
    cfg.decay_init.resize(static_cast<std::size_t>(std::max(heads, 1)));
    const double lo = std::log(0.01), hi = std::log(0.5);
    if (heads == 1) {
      cfg.decay_init[0] = std::exp(0.5 * (lo + hi));
    } else {
      for (int h = 0; h < heads; ++h) {
        cfg.decay_init[static_cast<std::size_t>(h)] =
            std::exp(lo + (hi - lo) * static_cast<double>(h) /
                              static_cast<double>(heads - 1));
      }
    }
    cfg.validate();
    return cfg;
  }
};

/// One multi-headed EMA branch: channel projection d_in -> d_branch (no
/// bias), per-channel EMA scan with learnable pre-sigmoid decays (channels
/// grouped by head for initialization), projection back to d_in (with bias).
struct EmaBranch {
  EmaBranchConfig cfg;
  Tensor w_in;   // [d_in, d_branch]
  Tensor rho;    // [d_branch], decay = sigmoid(rho)
  Tensor w_out;  // [d_branch, d_in]
  Tensor b_out;  // [d_in]

  static EmaBranch create(ParameterStore& store, const std::string& prefix,
                          const EmaBranchConfig& cfg, Rng& rng) {
    cfg.validate();
    EmaBranch br;
    br.cfg = cfg;
    br.w_in = store.create(prefix + ".w_in",
                           glorot_uniform({cfg.d_in, cfg.d_branch}, cfg.d_in,
                                          cfg.d_branch, rng));
    std::vector<double> rho(static_cast<std::size_t>(cfg.d_branch));
    const int per_head = cfg.d_branch / cfg.heads;
    for (int j = 0; j < cfg.d_branch; ++j) {
      const double a = cfg.decay_init[static_cast<std::size_t>(j / per_head)];
      rho[static_cast<std::size_t>(j)] = std::log(a / (1.0 - a));
    }
    br.rho = store.create(prefix + ".rho", Tensor({cfg.d_branch}, std::move(rho)));
    br.w_out = store.create(prefix + ".w_out",
                            glorot_uniform({cfg.d_branch, cfg.d_in}, cfg.d_branch,
                                           cfg.d_in, rng));
    br.b_out = store.create(prefix + ".b_out", Tensor::zeros({cfg.d_in}));
    return br;
  }

  /// [B,L,d_in] -> [B,L,d_in]
  Tensor forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(2) != cfg.d_in) {
      raise(ErrorCode::ShapeMismatch, "EMA branch expects [B,L," +
                                          std::to_string(cfg.d_in) + "]");
    }
    const int B = x.dim(0), L = x.dim(1);
    Tensor flat = reshape(x, {B * L, cfg.d_in});
    Tensor proj = dense(flat, w_in);
    Tensor seq = reshape(proj, {B, L, cfg.d_branch});
    Tensor smoothed = ema_scan(seq, sigmoid(rho));
    Tensor back = dense(reshape(smoothed, {B * L, cfg.d_branch}), w_out, b_out);
    return reshape(back, {B, L, cfg.d_in});
  }
};

// ---------------------------------------------------------------------------
// CEConv block
// ---------------------------------------------------------------------------

/// Convolution-plus-EMA block: 1D convolution (k=3, same padding) and
/// activation, then three parallel multi-headed EMA branches at small/medium/
/// large widths fused by a softmax gate as a residual. Two reduced variants
/// support runtime ablation: DoubleConv swaps the EMA residual for a second
/// convolution block, ConvOnly keeps just the convolution.
struct CeconvBlock {
  enum class Variant { Full, DoubleConv, ConvOnly };

  int channels = 0;
  Variant variant = Variant::Full;
  Tensor conv_k, conv_b;
  Tensor conv2_k, conv2_b;          // DoubleConv only
  std::vector<EmaBranch> branches;  // Full only: small, medium, large
  Tensor gate;                      // Full only: [3]

  /// Default branch plan: (C/2, C/16), (C, C/8), (2C, C/4) heads, each count
  /// at least 1. At the default C=64 this is (32,4), (64,8), (128,16).
  static std::array<EmaBranchConfig, 3> default_branches(int channels) {
    return {EmaBranchConfig::make(channels, std::max(1, channels / 2),
                                  std::max(1, channels / 16)),
            EmaBranchConfig::make(channels, channels, std::max(1, channels / 8)),
            EmaBranchConfig::make(channels, 2 * channels, std::max(1, channels / 4))};
  }

  static CeconvBlock create(ParameterStore& store, const std::string& prefix,
                            int channels, Variant variant, Rng& rng) {
    constexpr int k = 3;
    CeconvBlock blk;
    blk.channels = channels;
    blk.variant = variant;
    blk.conv_k = store.create(
        prefix + ".conv.k",
        glorot_uniform({channels, channels, k}, channels * k, channels * k, rng));
    blk.conv_b = store.create(prefix + ".conv.b", Tensor::zeros({channels}));
    if (variant == Variant::Full) {
      const auto cfgs = default_branches(channels);
      blk.branches.push_back(EmaBranch::create(store, prefix + ".ema_s", cfgs[0], rng));
      blk.branches.push_back(EmaBranch::create(store, prefix + ".ema_m", cfgs[1], rng));
      blk.branches.push_back(EmaBranch::create(store, prefix + ".ema_l", cfgs[2], rng));
      blk.gate = store.create(prefix + ".gate", Tensor::zeros({3}));
    } else if (variant == Variant::DoubleConv) {
      blk.conv2_k = store.create(
          prefix + ".conv2.k",
          glorot_uniform({channels, channels, k}, channels * k, channels * k, rng));
      blk.conv2_b = store.create(prefix + ".conv2.b", Tensor::zeros({channels}));
    }
    return blk;
  }

  /// [B,C,L] -> [B,C,L]
  Tensor forward(const Tensor& x) const {
    Tensor h = relu(conv1d(x, conv_k, conv_b));
    switch (variant) {
      case Variant::ConvOnly:
        return h;
      case Variant::DoubleConv:
        return relu(conv1d(h, conv2_k, conv2_b));
      case Variant::Full: {
        Tensor hs = transpose_12(h);  // [B,L,C]
        Tensor y_s = branches[0].forward(hs);
        Tensor y_m = branches[1].forward(hs);
        Tensor y_l = branches[2].forward(hs);
        return transpose_12(conflux_fuse(hs, y_s, y_m, y_l, gate));
      }
    }
    raise(ErrorCode::InvalidArgument, "unreachable ceconv variant");
  }
};

}  // namespace forge::nn
