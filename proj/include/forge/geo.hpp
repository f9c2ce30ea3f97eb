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
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "forge/errors.hpp"

namespace forge::geo {

// Spherical earth model. Mean radius keeps closed-form oracles exact; the
// study areas this toolkit targets span a few nautical miles, where the
// ellipsoidal correction is far below the AIS noise floor.
inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kMetersPerNm = 1852.0;
inline constexpr double kNmPerDegree =
    kEarthRadiusKm * 1000.0 * std::numbers::pi / 180.0 / kMetersPerNm;

inline constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

inline void require_valid(const GeoPoint& p, const std::string& what) {
  if (!is_valid(p)) {
    raise(ErrorCode::OutOfBounds, what + ": lat=" + std::to_string(p.lat) +
                                      " lon=" + std::to_string(p.lon));
  }
}

struct TimedState {
  double t = 0.0;  // seconds
  GeoPoint pos;

  friend bool operator==(const TimedState&, const TimedState&) = default;
};

struct Trajectory {
  std::string id;
  std::vector<TimedState> states;
  double dt = 0.0;  // sampling interval in seconds; 0 = irregular/unknown

  std::size_t length() const { return states.size(); }
};

struct Bounds {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool well_formed() const {
    return std::isfinite(lat_min) && std::isfinite(lat_max) &&
           std::isfinite(lon_min) && std::isfinite(lon_max) &&
           lat_min < lat_max && lon_min < lon_max;
  }

  bool contains(const GeoPoint& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min &&
           p.lon <= lon_max;
  }

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// A preprocessed route: trajectories of equal length sampled at one dt, with
/// the geographic extent used for normalization.
struct RouteDataset {
  std::vector<Trajectory> trajectories;
  Bounds bounds;
  std::string name;

  std::size_t size() const { return trajectories.size(); }
  std::size_t length() const {
    return trajectories.empty() ? 0 : trajectories.front().length();
  }
  double dt() const { return trajectories.empty() ? 0.0 : trajectories.front().dt; }
};

/// Simple polygon used to gate encounter detection. Vertices are stored in
/// order without the closing duplicate.
class RegionOfInterest {
 public:
  explicit RegionOfInterest(std::vector<GeoPoint> vertices)
      : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) {
      raise(ErrorCode::DegeneratePolygon, "polygon needs at least 3 vertices");
    }
    if (vertices_.front() == vertices_.back()) {
      raise(ErrorCode::DegeneratePolygon,
            "first vertex must not be duplicated at the end");
    }
    for (const auto& v : vertices_) require_valid(v, "polygon vertex");
    // Shoelace area; exactly zero means the vertices are collinear.
    double area2 = 0.0;
    for (std::size_t i = 0, j = vertices_.size() - 1; i < vertices_.size(); j = i++) {
      area2 += vertices_[j].lon * vertices_[i].lat - vertices_[i].lon * vertices_[j].lat;
    }
    if (std::abs(area2) < 1e-15) {
      raise(ErrorCode::DegeneratePolygon, "polygon vertices are collinear");
    }
  }

  const std::vector<GeoPoint>& vertices() const { return vertices_; }

 private:
  std::vector<GeoPoint> vertices_;
};

/// Great-circle distance in nautical miles (haversine on the spherical model).
inline double haversine_nm(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = deg2rad(b.lat - a.lat);
  const double dlam = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(0.5 * dphi);
  const double s2 = std::sin(0.5 * dlam);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  const double arc = 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
  return arc * kEarthRadiusKm * 1000.0 / kMetersPerNm;
}

/// Forward azimuth at `a` toward `b`, degrees in [0, 360).
inline double initial_bearing(const GeoPoint& a, const GeoPoint& b) {
  if (a == b) {
    raise(ErrorCode::CoincidentPoints, "bearing undefined for identical points");
  }
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dlam = deg2rad(b.lon - a.lon);
  const double y = std::sin(dlam) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) -
                   std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
  double deg = rad2deg(std::atan2(y, x));
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

namespace detail {

// Collinearity test in the lon/lat plane. Tolerance is absolute in
// degree-squared units; study-area coordinates are O(100) degrees at most.
inline bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const double cross = (b.lat - a.lat) * (p.lon - a.lon) -
                       (b.lon - a.lon) * (p.lat - a.lat);
  if (std::abs(cross) > 1e-12) return false;
  return p.lon >= std::min(a.lon, b.lon) - 1e-12 &&
         p.lon <= std::max(a.lon, b.lon) + 1e-12 &&
         p.lat >= std::min(a.lat, b.lat) - 1e-12 &&
         p.lat <= std::max(a.lat, b.lat) + 1e-12;
}

}  // namespace detail

/// Even-odd ray-casting membership with the half-open edge convention, so a
/// ray through a vertex is counted once. Points on the boundary count as
/// inside.
inline bool point_in_polygon(const GeoPoint& p, const RegionOfInterest& roi) {
  const auto& v = roi.vertices();
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if (detail::on_segment(p, v[j], v[i])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const bool crosses = (v[i].lat > p.lat) != (v[j].lat > p.lat);
    if (crosses) {
      const double x_at = (v[j].lon - v[i].lon) * (p.lat - v[i].lat) /
                              (v[j].lat - v[i].lat) +
                          v[i].lon;
      if (p.lon < x_at) inside = !inside;
    }
  }
  return inside;
}

/// Keeps trajectories whose first state lies in `start_box` and last state in
/// `end_box`.
inline std::vector<Trajectory> filter_route(const std::vector<Trajectory>& raw,
                                            const Bounds& start_box,
                                            const Bounds& end_box) {
  if (!start_box.well_formed() || !end_box.well_formed()) {
    raise(ErrorCode::InvalidArgument, "filter boxes must satisfy min < max");
  }
  std::vector<Trajectory> kept;
  for (const auto& traj : raw) {
    if (traj.states.empty()) continue;
    if (start_box.contains(traj.states.front().pos) &&
        end_box.contains(traj.states.back().pos)) {
      kept.push_back(traj);
    }
  }
  return kept;
}

/// Resamples onto the uniform grid t0, t0+dt, ... with linear interpolation
/// between bracketing samples. Never extrapolates past the original span.
inline Trajectory resample_uniform(const Trajectory& traj, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    raise(ErrorCode::InvalidArgument, "resample interval must be positive");
  }
  if (traj.states.size() < 2) {
    raise(ErrorCode::SpanTooShort, "trajectory has fewer than 2 states");
  }
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    if (!(traj.states[i].t > traj.states[i - 1].t)) {
      raise(ErrorCode::ParseError,
            "timestamps not strictly increasing in trajectory '" + traj.id + "'");
    }
  }
  const double t0 = traj.states.front().t;
  const double span = traj.states.back().t - t0;
  if (span < dt) {
    raise(ErrorCode::SpanTooShort, "trajectory span " + std::to_string(span) +
                                       " s is shorter than dt");
  }
  // Small slack so an exactly-integral span keeps its final grid point.
  const auto steps = static_cast<std::size_t>(std::floor(span / dt + 1e-9));

  Trajectory out;
  out.id = traj.id;
  out.dt = dt;
  out.states.reserve(steps + 1);
  std::size_t seg = 0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    while (seg + 2 < traj.states.size() && traj.states[seg + 1].t < t) ++seg;
    const TimedState& a = traj.states[seg];
    const TimedState& b = traj.states[seg + 1];
    if (t <= a.t) {
      out.states.push_back({t, a.pos});
    } else if (t >= b.t) {
      out.states.push_back({t, b.pos});
    } else {
      const double u = (t - a.t) / (b.t - a.t);
      out.states.push_back({t,
                            {a.pos.lat + u * (b.pos.lat - a.pos.lat),
                             a.pos.lon + u * (b.pos.lon - a.pos.lon)}});
    }
  }
  return out;
}

/// Drops trajectories whose mean point-wise distance to the rest of the set
/// exceeds median + k_mad * MAD. Distances are averaged over the common
/// prefix (the shortest trajectory length), so the rule also applies between
/// resampling and windowing when lengths still differ. Deterministic and
/// permutation-invariant; with fewer than 3 trajectories the rule is vacuous
/// and the input is returned unchanged.
inline std::vector<Trajectory> outlier_filter_pairwise(
    const std::vector<Trajectory>& trajs, double k_mad) {
  if (trajs.size() < 3 || std::isinf(k_mad)) return trajs;
  std::size_t prefix = std::numeric_limits<std::size_t>::max();
  for (const auto& t : trajs) prefix = std::min(prefix, t.length());
  if (prefix == 0) return trajs;

  const std::size_t n = trajs.size();
  std::vector<double> mean_dist(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < prefix; ++t) {
        acc += haversine_nm(trajs[i].states[t].pos, trajs[j].states[t].pos);
      }
      const double d = acc / static_cast<double>(prefix);
      mean_dist[i] += d;
      mean_dist[j] += d;
    }
  }
  for (auto& d : mean_dist) d /= static_cast<double>(n - 1);

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  };
  const double med = median(mean_dist);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(mean_dist[i] - med);
  const double mad = median(dev);
  const double threshold = med + k_mad * mad;

  std::vector<Trajectory> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= threshold) kept.push_back(trajs[i]);
  }
  return kept;
}

/// Standardizes sequence length: trajectories shorter than `window_steps` are
/// dropped, longer ones are truncated to their first `window_steps` states.
inline std::vector<Trajectory> standardize_window(
    const std::vector<Trajectory>& trajs, std::size_t window_steps) {
  if (window_steps < 2) {
    raise(ErrorCode::InvalidArgument, "window must be at least 2 steps");
  }
  std::vector<Trajectory> out;
  for (const auto& traj : trajs) {
    if (traj.length() < window_steps) continue;
    Trajectory cut;
    cut.id = traj.id;
    cut.dt = traj.dt;
    cut.states.assign(traj.states.begin(),
                      traj.states.begin() + static_cast<std::ptrdiff_t>(window_steps));
    out.push_back(std::move(cut));
  }
  return out;
}

/// Exact min/max extent over every state of every trajectory.
inline Bounds compute_bounds(const std::vector<Trajectory>& trajs) {
  Bounds b{90.0, -90.0, 180.0, -180.0};
  bool any = false;
  for (const auto& traj : trajs) {
    for (const auto& s : traj.states) {
      b.lat_min = std::min(b.lat_min, s.pos.lat);
      b.lat_max = std::max(b.lat_max, s.pos.lat);
      b.lon_min = std::min(b.lon_min, s.pos.lon);
      b.lon_max = std::max(b.lon_max, s.pos.lon);
      any = true;
    }
  }
  if (!any) raise(ErrorCode::EmptyDataset, "cannot compute bounds of empty set");
  return b;
}

/// Builds a RouteDataset, validating the equal-length / shared-dt invariant.
inline RouteDataset make_route_dataset(std::string name,
                                       std::vector<Trajectory> trajs) {
  if (trajs.empty()) raise(ErrorCode::EmptyDataset, "route dataset is empty");
  const std::size_t len = trajs.front().length();
  const double dt = trajs.front().dt;
  for (const auto& t : trajs) {
    if (t.length() != len) {
      raise(ErrorCode::ShapeMismatch,
            "trajectory '" + t.id + "' length differs from dataset length");
    }
    if (t.dt != dt) {
      raise(ErrorCode::ShapeMismatch,
            "trajectory '" + t.id + "' sampling interval differs");
    }
  }
  RouteDataset ds;
  ds.bounds = compute_bounds(trajs);
  ds.trajectories = std::move(trajs);
  ds.name = std::move(name);
  return ds;
}

/// Positions mapped per-axis into [0,1]; column 0 is latitude, column 1
/// longitude. source_bounds is carried so the map can be inverted without the
/// training data.
struct NormalizedSequence {
  std::vector<std::array<double, 2>> values;
  Bounds source_bounds;

  std::size_t length() const { return values.size(); }
};

inline void require_bounds_usable(const Bounds& b) {
  if (!(b.lat_max > b.lat_min) || !(b.lon_max > b.lon_min)) {
    raise(ErrorCode::DegenerateBounds, "bounds must satisfy max > min per axis");
  }
}

inline NormalizedSequence normalize(const Trajectory& traj, const Bounds& bounds) {
  require_bounds_usable(bounds);
  NormalizedSequence seq;
  seq.source_bounds = bounds;
  seq.values.reserve(traj.length());
  const double lat_range = bounds.lat_max - bounds.lat_min;
  const double lon_range = bounds.lon_max - bounds.lon_min;
  for (const auto& s : traj.states) {
    if (!bounds.contains(s.pos)) {
      raise(ErrorCode::OutOfBounds,
            "trajectory '" + traj.id + "' leaves the normalization bounds");
    }
    seq.values.push_back({(s.pos.lat - bounds.lat_min) / lat_range,
                          (s.pos.lon - bounds.lon_min) / lon_range});
  }
  return seq;
}

/// Like normalize() but clamps to [0,1] instead of failing; used when scoring
/// generated or smoothed tracks that may overshoot the training extent
/// slightly.
inline NormalizedSequence normalize_clamped(const Trajectory& traj,
                                            const Bounds& bounds) {
  require_bounds_usable(bounds);
  NormalizedSequence seq;
  seq.source_bounds = bounds;
  seq.values.reserve(traj.length());
  const double lat_range = bounds.lat_max - bounds.lat_min;
  const double lon_range = bounds.lon_max - bounds.lon_min;
  for (const auto& s : traj.states) {
    seq.values.push_back(
        {std::clamp((s.pos.lat - bounds.lat_min) / lat_range, 0.0, 1.0),
         std::clamp((s.pos.lon - bounds.lon_min) / lon_range, 0.0, 1.0)});
  }
  return seq;
}

/// Inverse of normalize(); timestamps are assigned 0, dt, 2dt, ...
inline Trajectory denormalize(const NormalizedSequence& seq, double dt = 10.0,
                              std::string id = "") {
  require_bounds_usable(seq.source_bounds);
  const Bounds& b = seq.source_bounds;
  Trajectory traj;
  traj.id = std::move(id);
  traj.dt = dt;
  traj.states.reserve(seq.length());
  for (std::size_t i = 0; i < seq.length(); ++i) {
    traj.states.push_back({static_cast<double>(i) * dt,
                           {b.lat_min + seq.values[i][0] * (b.lat_max - b.lat_min),
                            b.lon_min + seq.values[i][1] * (b.lon_max - b.lon_min)}});
  }
  return traj;
}

}  // namespace forge::geo
