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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "forge/geo.hpp"
#include "forge/rng.hpp"

namespace forge::synth {

/// Geometry of the synthetic study box: a square of side extent_deg centered
/// on (lat0, lon0). noise_deg is the per-coordinate observation noise sigma.
struct SynthConfig {
  double lat0 = 0.0;
  double lon0 = 0.0;
  double extent_deg = 0.03;
  double noise_deg = 1e-4;

  void validate() const {
    if (!(extent_deg > 0.0) || !(noise_deg >= 0.0)) {
      raise(ErrorCode::ConfigInvalid, "synth extent must be > 0 and noise >= 0");
    }
    geo::require_valid({lat0, lon0}, "synth center");
  }
};

namespace detail {

inline std::string make_id(const char* prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06zu", prefix, index);
  return buf;
}

}  // namespace detail

/// Quarter-arc family. Track i follows
///   lat(s) = clat + r * sin(theta(s)),  lon(s) = clon + r * cos(theta(s)),
/// theta sweeping 180..270 degrees, with per-track jitter on the center
/// (+-0.05 E), radius (0.30 E +- 0.05 E) and sweep phase, plus iid Gaussian
/// noise (sigma = noise_deg) on both coordinates.
inline std::vector<geo::Trajectory> make_arcs(const SynthConfig& cfg,
                                              std::size_t count, std::size_t steps,
                                              double dt, std::uint64_t seed) {
  cfg.validate();
  const double e = cfg.extent_deg;
  std::vector<geo::Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const double clat = cfg.lat0 + rng.uniform(-0.05, 0.05) * e;
    const double clon = cfg.lon0 + rng.uniform(-0.05, 0.05) * e;
    const double r = (0.30 + rng.uniform(-0.05, 0.05)) * e;
    const double theta0 = std::numbers::pi * (1.0 + rng.uniform(-0.02, 0.02));
    const double theta1 = theta0 + 0.5 * std::numbers::pi;
    geo::Trajectory traj;
    traj.id = detail::make_id("arc", i);
    traj.dt = dt;
    for (std::size_t k = 0; k < steps; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(steps - 1);
      const double theta = theta0 + s * (theta1 - theta0);
      traj.states.push_back({static_cast<double>(k) * dt,
                             {clat + r * std::sin(theta) + cfg.noise_deg * rng.normal(),
                              clon + r * std::cos(theta) + cfg.noise_deg * rng.normal()}});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

/// S-curve family: latitude runs linearly south to north across 0.9 E while
///   lon(s) = lon0 + shift + 0.3 E * amp * tanh(4 (s - 1/2)),
/// with amp ~ U(0.6, 1.0) and shift ~ U(-0.05, 0.05) E per track, plus the
/// same iid Gaussian observation noise.
inline std::vector<geo::Trajectory> make_scurves(const SynthConfig& cfg,
                                                 std::size_t count, std::size_t steps,
                                                 double dt, std::uint64_t seed) {
  cfg.validate();
  const double e = cfg.extent_deg;
  std::vector<geo::Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    const double amp = rng.uniform(0.6, 1.0);
    const double shift = rng.uniform(-0.05, 0.05) * e;
    geo::Trajectory traj;
    traj.id = detail::make_id("scv", i);
    traj.dt = dt;
    for (std::size_t k = 0; k < steps; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(steps - 1);
      const double lat = cfg.lat0 + (s - 0.5) * 0.9 * e;
      const double lon = cfg.lon0 + shift + 0.3 * e * amp * std::tanh(4.0 * (s - 0.5));
      traj.states.push_back({static_cast<double>(k) * dt,
                             {lat + cfg.noise_deg * rng.normal(),
                              lon + cfg.noise_deg * rng.normal()}});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

/// Two crossing corridors through the box center. Flow 1 runs the SW -> NE
/// diagonal, flow 2 the NW -> SE diagonal; the straight baselines intersect
/// at the center, so aligned tracks produce close encounters. Track i is
///   pos(s) = A + s (B - A) + (offset + wobble * sin(2 pi (s + phase))) * n
/// with lateral offset ~ U(-0.08, 0.08) E, wobble amplitude ~ U(0, 0.02) E,
/// phase ~ U(0, 1), plus iid Gaussian observation noise. n is the unit
/// normal of the corridor in degree space.
inline std::vector<geo::Trajectory> make_crossing_flow(const SynthConfig& cfg,
                                                       int flow, std::size_t count,
                                                       std::size_t steps, double dt,
                                                       std::uint64_t seed) {
  cfg.validate();
  if (flow != 1 && flow != 2) {
    raise(ErrorCode::InvalidArgument, "crossing flow must be 1 or 2");
  }
  const double e = cfg.extent_deg;
  const double a_lat = flow == 1 ? cfg.lat0 - 0.45 * e : cfg.lat0 + 0.45 * e;
  const double b_lat = flow == 1 ? cfg.lat0 + 0.45 * e : cfg.lat0 - 0.45 * e;
  const double a_lon = cfg.lon0 - 0.45 * e;
  const double b_lon = cfg.lon0 + 0.45 * e;
  const double dir_lat = b_lat - a_lat, dir_lon = b_lon - a_lon;
  const double norm = std::hypot(dir_lat, dir_lon);
  const double n_lat = -dir_lon / norm, n_lon = dir_lat / norm;

  // Distinct per-flow streams so the flows are independent for equal seeds.
  const std::uint64_t flow_seed = derive_seed(seed, flow == 1 ? 0x11 : 0x22);
  std::vector<geo::Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(flow_seed, i));
    const double offset = rng.uniform(-0.08, 0.08) * e;
    const double wobble = rng.uniform(0.0, 0.02) * e;
    const double phase = rng.uniform(0.0, 1.0);
    geo::Trajectory traj;
    traj.id = detail::make_id(flow == 1 ? "x1" : "x2", i);
    traj.dt = dt;
    for (std::size_t k = 0; k < steps; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(steps - 1);
      const double lateral =
          offset + wobble * std::sin(2.0 * std::numbers::pi * (s + phase));
      traj.states.push_back(
          {static_cast<double>(k) * dt,
           {a_lat + s * dir_lat + lateral * n_lat + cfg.noise_deg * rng.normal(),
            a_lon + s * dir_lon + lateral * n_lon + cfg.noise_deg * rng.normal()}});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace forge::synth
