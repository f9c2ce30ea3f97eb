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
#include <span>
#include <vector>

#include "forge/geo.hpp"

namespace forge::eval {

/// Savitzky-Golay smoother: local least-squares polynomial fit of the given
/// order over an odd window. Interior points use the centered fit; the first
/// and last half-windows evaluate the boundary window's fit off-center, which
/// preserves sequence length and reproduces any polynomial of degree <= order
/// exactly at every position (padding schemes cannot do that at the edges).
class SavitzkyGolay {
 public:
  explicit SavitzkyGolay(int window = 11, int order = 3)
      : window_(window), order_(order) {
    if (window < 3 || window % 2 == 0) {
      raise(ErrorCode::InvalidArgument, "window must be odd and >= 3");
    }
    if (order < 0 || order >= window) {
      raise(ErrorCode::InvalidArgument, "order must satisfy 0 <= order < window");
    }
    const int h = window / 2;
    Eigen::MatrixXd a(window, order + 1);
    for (int i = 0; i < window; ++i) {
      double pw = 1.0;
      for (int j = 0; j <= order; ++j) {
        a(i, j) = pw;
        pw *= static_cast<double>(i - h);
      }
    }
    // Rows of the least-squares projection A (A^T A)^-1 A^T give the filter
    // taps for evaluating the window fit at each in-window position.
    proj_ = a * (a.transpose() * a).ldlt().solve(a.transpose());
  }

  int window() const { return window_; }
  int order() const { return order_; }

  std::vector<double> apply(std::span<const double> y) const {
    const int n = static_cast<int>(y.size());
    if (n < window_) {
      raise(ErrorCode::WindowTooLarge,
            "sequence of length " + std::to_string(n) + " shorter than window " +
                std::to_string(window_));
    }
    const int h = window_ / 2;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      int row, start;
      if (i < h) {
        row = i;
        start = 0;
      } else if (i > n - 1 - h) {
        row = window_ - 1 - (n - 1 - i);
        start = n - window_;
      } else {
        row = h;
        start = i - h;
      }
      double acc = 0.0;
      for (int j = 0; j < window_; ++j) {
        acc += proj_(row, j) * y[static_cast<std::size_t>(start + j)];
      }
      out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
  }

 private:
  int window_;
  int order_;
  Eigen::MatrixXd proj_;
};

/// Smooths latitude and longitude independently; timestamps are unchanged.
inline geo::Trajectory savgol_smooth(const geo::Trajectory& traj, int window = 11,
                                     int order = 3) {
  SavitzkyGolay filter(window, order);
  std::vector<double> lat(traj.length()), lon(traj.length());
  for (std::size_t i = 0; i < traj.length(); ++i) {
    lat[i] = traj.states[i].pos.lat;
    lon[i] = traj.states[i].pos.lon;
  }
  const auto lat_s = filter.apply(lat);
  const auto lon_s = filter.apply(lon);
  geo::Trajectory out = traj;
  for (std::size_t i = 0; i < traj.length(); ++i) {
    out.states[i].pos = {lat_s[i], lon_s[i]};
  }
  return out;
}

}  // namespace forge::eval
