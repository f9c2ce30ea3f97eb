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
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "forge/geo.hpp"

namespace forge::eval {

/// Distribution-level comparison of a generated set against a reference set,
/// computed in normalized coordinate space so thresholds are scale-free.
/// mmd may be slightly negative under the unbiased estimator.
struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  double dm = 0.0;
  double mmd = 0.0;
  std::size_t ref_count = 0;  // m
  std::size_t gen_count = 0;  // n
  double bandwidth = 0.0;     // kernel sigma used for mmd
};

namespace detail {

inline Eigen::MatrixXd flatten_set(const std::vector<geo::NormalizedSequence>& set) {
  if (set.empty()) raise(ErrorCode::EmptyDataset, "metric input set is empty");
  const std::size_t len = set.front().length();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(set.size()),
                    static_cast<Eigen::Index>(2 * len));
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].length() != len) {
      raise(ErrorCode::LengthMismatch, "sequences differ in length");
    }
    for (std::size_t t = 0; t < len; ++t) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * t)) =
          set[i].values[t][0];
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(2 * t + 1)) =
          set[i].values[t][1];
    }
  }
  return m;
}

}  // namespace detail

/// Mean absolute and mean squared error averaged over every (generated,
/// reference) pair and every coordinate. Plain double loop; the accumulation
/// order is part of the contract (tests compare it bitwise against a naive
/// reimplementation).
inline std::pair<double, double> pairwise_errors(
    const std::vector<geo::NormalizedSequence>& gen,
    const std::vector<geo::NormalizedSequence>& ref) {
  if (gen.empty() || ref.empty()) {
    raise(ErrorCode::EmptyDataset, "pairwise_errors needs non-empty sets");
  }
  const std::size_t len = gen.front().length();
  for (const auto& s : gen) {
    if (s.length() != len) raise(ErrorCode::LengthMismatch, "generated set ragged");
  }
  for (const auto& s : ref) {
    if (s.length() != len) {
      raise(ErrorCode::LengthMismatch, "reference length differs from generated");
    }
  }
  const double coords = static_cast<double>(2 * len);
  double mae_sum = 0.0, mse_sum = 0.0;
  for (const auto& g : gen) {
    for (const auto& r : ref) {
      double abs_acc = 0.0, sq_acc = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        for (int c = 0; c < 2; ++c) {
          const double d = g.values[t][static_cast<std::size_t>(c)] -
                           r.values[t][static_cast<std::size_t>(c)];
          abs_acc += std::abs(d);
          sq_acc += d * d;
        }
      }
      mae_sum += abs_acc / coords;
      mse_sum += sq_acc / coords;
    }
  }
  const double pairs = static_cast<double>(gen.size() * ref.size());
  return {mae_sum / pairs, mse_sum / pairs};
}

/// Gaussian Frechet (2-Wasserstein) distance between the sets' fitted means
/// and covariances on flattened trajectories:
///   dm^2 = |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)).
/// The cross term is evaluated as tr of the PSD square root of
/// S1^(1/2) S2 S1^(1/2). Covariances use the unbiased 1/(n-1) normalization.
/// Eigenvalues below -1e-10 are an error; small negatives are clamped to 0.
inline double frechet_dm(const std::vector<geo::NormalizedSequence>& gen,
                         const std::vector<geo::NormalizedSequence>& ref) {
  if (gen.size() < 2 || ref.size() < 2) {
    raise(ErrorCode::InvalidArgument, "frechet_dm needs at least 2 sequences per set");
  }
  const Eigen::MatrixXd a = detail::flatten_set(gen);
  const Eigen::MatrixXd b = detail::flatten_set(ref);
  if (a.cols() != b.cols()) raise(ErrorCode::LengthMismatch, "dimension mismatch");

  auto fit = [](const Eigen::MatrixXd& x) {
    const Eigen::VectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered /
                                static_cast<double>(x.rows() - 1);
    return std::make_pair(mu, cov);
  };
  const auto [mu1, s1] = fit(a);
  const auto [mu2, s2] = fit(b);

  auto psd_sqrt = [](const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    Eigen::VectorXd lam = eig.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      if (lam(i) < -1e-10) {
        raise(ErrorCode::CovarianceNotPSD,
              "negative eigenvalue " + std::to_string(lam(i)));
      }
      lam(i) = std::sqrt(std::max(0.0, lam(i)));
    }
    return Eigen::MatrixXd(eig.eigenvectors() * lam.asDiagonal() *
                           eig.eigenvectors().transpose());
  };

  const Eigen::MatrixXd s1_half = psd_sqrt(s1);
  Eigen::MatrixXd inner = s1_half * s2 * s1_half;
  inner = 0.5 * (inner + inner.transpose());  // symmetrize rounding residue
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
  double tr_cross = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double lam = eig.eigenvalues()(i);
    if (lam < -1e-10) {
      raise(ErrorCode::CovarianceNotPSD, "cross term eigenvalue " + std::to_string(lam));
    }
    tr_cross += std::sqrt(std::max(0.0, lam));
  }
  double dm2 = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_cross;
  // The trace difference cancels catastrophically when the sets coincide;
  // residues below numerical resolution are genuine zeros.
  const double scale = 1.0 + std::abs(s1.trace()) + std::abs(s2.trace());
  if (dm2 < 1e-13 * scale) dm2 = 0.0;
  return std::sqrt(dm2);
}

/// Median-heuristic kernel bandwidth: the median Euclidean distance over all
/// distinct pairs of the pooled set.
inline double median_heuristic_bandwidth(const Eigen::MatrixXd& pooled) {
  const Eigen::Index n = pooled.rows();
  const Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) - 1) / 2);
  const Eigen::MatrixXd gram = pooled * pooled.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2.push_back(std::max(0.0, sq(i) + sq(j) - 2.0 * gram(i, j)));
    }
  }
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  double sigma;
  if (d2.size() % 2 == 1) {
    sigma = std::sqrt(d2[mid]);
  } else {
    const double hi = d2[mid];
    const double lo = *std::max_element(d2.begin(),
                                        d2.begin() + static_cast<std::ptrdiff_t>(mid));
    sigma = 0.5 * (std::sqrt(lo) + std::sqrt(hi));
  }
  return std::max(sigma, 1e-12);
}

/// Unbiased squared maximum mean discrepancy with the exponentiated-quadratic
/// kernel k(x,y) = exp(-|x-y|^2 / (2 sigma^2)):
///   mmd^2 = sum_{i!=j} k(x_i,x_j)/(m(m-1)) + sum_{i!=j} k(y_i,y_j)/(n(n-1))
///           - 2 sum_{i,j} k(x_i,y_j)/(mn).
/// sigma defaults to the pooled median heuristic. Deterministic; may be
/// slightly negative.
inline double mmd_squared(const std::vector<geo::NormalizedSequence>& gen,
                          const std::vector<geo::NormalizedSequence>& ref,
                          std::optional<double> bandwidth = std::nullopt,
                          double* bandwidth_used = nullptr) {
  if (gen.size() < 2 || ref.size() < 2) {
    raise(ErrorCode::InvalidArgument, "mmd_squared needs at least 2 sequences per set");
  }
  const Eigen::MatrixXd x = detail::flatten_set(ref);
  const Eigen::MatrixXd y = detail::flatten_set(gen);
  if (x.cols() != y.cols()) raise(ErrorCode::LengthMismatch, "dimension mismatch");

  double sigma;
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) {
      raise(ErrorCode::InvalidArgument, "bandwidth must be positive");
    }
    sigma = *bandwidth;
  } else {
    Eigen::MatrixXd pooled(x.rows() + y.rows(), x.cols());
    pooled << x, y;
    sigma = median_heuristic_bandwidth(pooled);
  }
  if (bandwidth_used) *bandwidth_used = sigma;
  const double gamma = 1.0 / (2.0 * sigma * sigma);

  auto kernel_offdiag_sum = [gamma](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    bool same) {
    const Eigen::VectorXd sa = a.rowwise().squaredNorm();
    const Eigen::VectorXd sb = b.rowwise().squaredNorm();
    const Eigen::MatrixXd gram = a * b.transpose();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (same && i == j) continue;
        const double d2 = std::max(0.0, sa(i) + sb(j) - 2.0 * gram(i, j));
        acc += std::exp(-gamma * d2);
      }
    }
    return acc;
  };

  // Accumulate the cross term in a canonical order so mmd(X,Y) == mmd(Y,X)
  // bit for bit.
  auto lex_less = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (a(i, j) != b(i, j)) return a(i, j) < b(i, j);
      }
    }
    return false;
  };

  const auto m = static_cast<double>(x.rows());
  const auto n = static_cast<double>(y.rows());
  const double kxx = kernel_offdiag_sum(x, x, true) / (m * (m - 1.0));
  const double kyy = kernel_offdiag_sum(y, y, true) / (n * (n - 1.0));
  const double kxy_sum = lex_less(x, y) ? kernel_offdiag_sum(x, y, false)
                                        : kernel_offdiag_sum(y, x, false);
  const double kxy = kxy_sum / (m * n);
  return (kxx + kyy) - 2.0 * kxy;
}

}  // namespace forge::eval
