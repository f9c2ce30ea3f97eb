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
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/geo.hpp"

namespace forge::encounter {

inline constexpr int kScenarioSchemaVersion = 1;

/// Position plus speed/course over ground reconstructed from consecutive
/// samples.
struct KinematicState {
  double t = 0.0;
  geo::GeoPoint pos;
  double sog_kn = 0.0;   // knots
  double cog_deg = 0.0;  // degrees true, [0,360)
};

/// Closest-point-of-approach indicators for one vessel pair at one instant.
/// tcpa_s < 0 means the vessels are diverging; +infinity means zero relative
/// motion.
struct CpaResult {
  double range_nm = 0.0;
  double dcpa_nm = 0.0;
  double tcpa_s = 0.0;
};

struct ScenarioConfig {
  double d_min_nm = 0.05;   // near-contact proximity threshold
  double d_th_nm = 0.5;     // instantaneous range gate for the converging test
  double t_th_s = 600.0;    // admissible time-to-CPA window
  double d_cpa_nm = 0.1;    // admissible closest-approach distance
  double t_early_s = 100.0;
  double t_after_s = 100.0;
  int offset_stride_steps = 1;
  std::size_t max_pairs = 1000;

  void validate() const {
    if (!(d_min_nm > 0.0) || !(d_th_nm > 0.0) || !(t_th_s > 0.0) ||
        !(d_cpa_nm > 0.0) || !(t_early_s > 0.0) || !(t_after_s > 0.0)) {
      raise(ErrorCode::ConfigInvalid, "scenario thresholds must be positive");
    }
    if (offset_stride_steps < 1) {
      raise(ErrorCode::ConfigInvalid, "offset stride must be >= 1");
    }
    if (max_pairs < 1) raise(ErrorCode::ConfigInvalid, "max_pairs must be >= 1");
  }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// One (i, j) pairing at its best relative time shift. offset_steps shifts
/// trajectory j: sample l of vessel j is aligned with sample l + offset of
/// vessel i. k_star / l_star index the minimum-separation instant.
struct EncounterCandidate {
  int i = 0;
  int j = 0;
  int offset_steps = 0;
  int k_star = 0;
  int l_star = 0;
  double d_min_observed_nm = 0.0;

  friend bool operator==(const EncounterCandidate&, const EncounterCandidate&) = default;
};

struct VesselSegments {
  std::vector<geo::TimedState> pre;
  std::vector<geo::TimedState> encounter;
  std::vector<geo::TimedState> post;
};

/// Standardized three-segment scenario anchored at the closest-interaction
/// instant t_star. Scenario time is anchored at vessel 1's first sample
/// (t = 0); vessel 2 timestamps may be negative when its shifted track starts
/// earlier.
struct Scenario {
  int i = 0;
  int j = 0;
  int offset_steps = 0;
  double t_star_s = 0.0;
  double t_early_s = 0.0;
  double t_after_s = 0.0;
  double d_min_observed_nm = 0.0;
  VesselSegments flow1;
  VesselSegments flow2;
  ScenarioConfig config;
};

/// SOG/COG from consecutive samples: sog_k = d(p_{k-1}, p_k) / dt, cog_k the
/// forward bearing. The first state copies the second's estimates. Steps
/// shorter than 1e-9 nm carry the previous course forward (0 before any
/// motion).
inline std::vector<KinematicState> reconstruct_kinematics(const geo::Trajectory& traj) {
  if (traj.length() < 2) {
    raise(ErrorCode::SpanTooShort, "kinematics need at least 2 states");
  }
  const double dt = traj.dt > 0.0 ? traj.dt
                                  : traj.states[1].t - traj.states[0].t;
  if (!(dt > 0.0)) raise(ErrorCode::NonUniformSampling, "non-positive sampling step");
  for (std::size_t k = 1; k < traj.length(); ++k) {
    const double gap = traj.states[k].t - traj.states[k - 1].t;
    if (std::abs(gap - dt) > 1e-6 * std::max(1.0, dt)) {
      raise(ErrorCode::NonUniformSampling,
            "trajectory '" + traj.id + "' is not uniformly sampled");
    }
  }

  std::vector<KinematicState> out(traj.length());
  double carried_cog = 0.0;
  for (std::size_t k = 1; k < traj.length(); ++k) {
    const auto& prev = traj.states[k - 1];
    const auto& cur = traj.states[k];
    const double dist_nm = geo::haversine_nm(prev.pos, cur.pos);
    double cog = carried_cog;
    if (dist_nm > 1e-9) {
      cog = geo::initial_bearing(prev.pos, cur.pos);
      carried_cog = cog;
    }
    out[k] = {cur.t, cur.pos, dist_nm / dt * 3600.0, cog};
  }
  out[0] = {traj.states[0].t, traj.states[0].pos, out[1].sog_kn, out[1].cog_deg};
  return out;
}

/// CPA under constant-velocity extrapolation on a local tangent plane
/// (equirectangular about the pair midpoint; adequate below ~10 nm
/// separations). With |relative velocity| < 1e-9 kn, tcpa is reported as
/// +infinity and dcpa equals the current range.
inline CpaResult relative_cpa(const KinematicState& a, const KinematicState& b) {
  if (std::abs(a.t - b.t) > 1e-6) {
    raise(ErrorCode::InvalidArgument, "CPA needs states at the same instant");
  }
  const double lat0 = 0.5 * (a.pos.lat + b.pos.lat);
  const double lon0 = 0.5 * (a.pos.lon + b.pos.lon);
  const double coslat = std::cos(geo::deg2rad(lat0));
  auto project = [&](const geo::GeoPoint& p) {
    return std::array<double, 2>{(p.lon - lon0) * coslat * geo::kNmPerDegree,
                                 (p.lat - lat0) * geo::kNmPerDegree};
  };
  const auto pa = project(a.pos);
  const auto pb = project(b.pos);
  auto velocity = [](const KinematicState& s) {
    const double rad = geo::deg2rad(s.cog_deg);
    return std::array<double, 2>{s.sog_kn * std::sin(rad), s.sog_kn * std::cos(rad)};
  };
  const auto va = velocity(a);
  const auto vb = velocity(b);
  const double rx = pb[0] - pa[0], ry = pb[1] - pa[1];
  const double vx = vb[0] - va[0], vy = vb[1] - va[1];

  CpaResult res;
  res.range_nm = std::hypot(rx, ry);
  const double v2 = vx * vx + vy * vy;
  if (std::sqrt(v2) < 1e-9) {
    res.tcpa_s = std::numeric_limits<double>::infinity();
    res.dcpa_nm = res.range_nm;
    return res;
  }
  const double tcpa_h = -(rx * vx + ry * vy) / v2;
  res.tcpa_s = tcpa_h * 3600.0;
  res.dcpa_nm = std::hypot(rx + vx * tcpa_h, ry + vy * tcpa_h);
  return res;
}

namespace detail {

// Cheap lower bound on the great-circle distance in nm, used to skip
// haversine evaluations that cannot beat the current minimum.
inline double distance_lower_bound_nm(const geo::GeoPoint& a, const geo::GeoPoint& b,
                                      double cos_lat_hint) {
  const double dlat = std::abs(a.lat - b.lat);
  const double dlon = std::abs(a.lon - b.lon);
  return std::max(dlat, dlon * cos_lat_hint) * geo::kNmPerDegree * 0.999;
}

struct AlignedRange {
  int l_lo;  // inclusive
  int l_hi;  // exclusive
};

inline AlignedRange overlap(int len1, int len2, int offset) {
  return {std::max(0, -offset), std::min(len2, len1 - offset)};
}

}  // namespace detail

/// Scans every (i, j) pair over a grid of relative time shifts of trajectory
/// j. For each shift, the separation minimum is taken over aligned instants
/// where BOTH positions are inside the region of interest; a shift qualifies
/// when that minimum is <= d_min_nm. Per pair only the best shift is kept
/// (smallest minimum; earlier shift wins ties). Output is ordered by (i, j);
/// the per-pair evaluation is pure, so pairs may be scanned concurrently as
/// long as results are merged in that order.
inline std::vector<EncounterCandidate> pair_search(
    const std::vector<geo::Trajectory>& pool1,
    const std::vector<geo::Trajectory>& pool2, const geo::RegionOfInterest& roi,
    const ScenarioConfig& cfg) {
  cfg.validate();
  auto roi_mask = [&roi](const std::vector<geo::Trajectory>& pool) {
    std::vector<std::vector<char>> mask(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      mask[i].resize(pool[i].length());
      for (std::size_t k = 0; k < pool[i].length(); ++k) {
        mask[i][k] = geo::point_in_polygon(pool[i].states[k].pos, roi) ? 1 : 0;
      }
    }
    return mask;
  };
  const auto mask1 = roi_mask(pool1);
  const auto mask2 = roi_mask(pool2);

  double max_abs_lat = 0.0;
  for (const auto* pool : {&pool1, &pool2}) {
    for (const auto& t : *pool) {
      for (const auto& s : t.states) max_abs_lat = std::max(max_abs_lat, std::abs(s.pos.lat));
    }
  }
  const double cos_hint = std::cos(geo::deg2rad(std::min(max_abs_lat, 89.0)));

  std::vector<EncounterCandidate> out;
  for (std::size_t i = 0; i < pool1.size(); ++i) {
    const int len1 = static_cast<int>(pool1[i].length());
    for (std::size_t j = 0; j < pool2.size(); ++j) {
      const int len2 = static_cast<int>(pool2[j].length());
      bool found = false;
      EncounterCandidate best;
      for (int offset = -(len2 - 1); offset <= len1 - 1;
           offset += cfg.offset_stride_steps) {
        const auto [l_lo, l_hi] = detail::overlap(len1, len2, offset);
        double d_min = std::numeric_limits<double>::infinity();
        int at_l = -1;
        for (int l = l_lo; l < l_hi; ++l) {
          const int k = l + offset;
          if (!mask1[i][static_cast<std::size_t>(k)] ||
              !mask2[j][static_cast<std::size_t>(l)]) {
            continue;
          }
          const auto& p1 = pool1[i].states[static_cast<std::size_t>(k)].pos;
          const auto& p2 = pool2[j].states[static_cast<std::size_t>(l)].pos;
          if (detail::distance_lower_bound_nm(p1, p2, cos_hint) >= d_min) continue;
          const double d = geo::haversine_nm(p1, p2);
          if (d < d_min) {
            d_min = d;
            at_l = l;
          }
        }
        if (at_l < 0 || d_min > cfg.d_min_nm) continue;
        if (!found || d_min < best.d_min_observed_nm) {
          found = true;
          best = {static_cast<int>(i), static_cast<int>(j), offset, at_l + offset,
                  at_l, d_min};
        }
      }
      if (found) out.push_back(best);
    }
  }
  return out;
}

/// Safety-critical test for a candidate: (a) the observed minimum separation
/// is within d_min_nm, and (b) some aligned instant is genuinely converging:
/// range <= d_th_nm, 0 < tcpa <= t_th_s and dcpa <= d_cpa_nm, with kinematics
/// reconstructed per trajectory.
inline bool safety_filter(const EncounterCandidate& c,
                          const std::vector<geo::Trajectory>& pool1,
                          const std::vector<geo::Trajectory>& pool2,
                          const ScenarioConfig& cfg) {
  if (c.d_min_observed_nm > cfg.d_min_nm) return false;
  const auto& t1 = pool1[static_cast<std::size_t>(c.i)];
  const auto& t2 = pool2[static_cast<std::size_t>(c.j)];
  const auto kin1 = reconstruct_kinematics(t1);
  const auto kin2 = reconstruct_kinematics(t2);
  const auto [l_lo, l_hi] = detail::overlap(static_cast<int>(t1.length()),
                                            static_cast<int>(t2.length()),
                                            c.offset_steps);
  for (int l = l_lo; l < l_hi; ++l) {
    const int k = l + c.offset_steps;
    KinematicState a = kin1[static_cast<std::size_t>(k)];
    KinematicState b = kin2[static_cast<std::size_t>(l)];
    b.t = a.t;  // aligned instants share scenario time
    const CpaResult cpa = relative_cpa(a, b);
    if (cpa.range_nm <= cfg.d_th_nm && cpa.tcpa_s > 0.0 &&
        cpa.tcpa_s <= cfg.t_th_s && cpa.dcpa_nm <= cfg.d_cpa_nm) {
      return true;
    }
  }
  return false;
}

namespace detail {

inline VesselSegments split_segments(const std::vector<geo::TimedState>& states,
                                     double t_start, double t_end) {
  VesselSegments seg;
  for (const auto& s : states) {
    if (s.t < t_start) {
      seg.pre.push_back(s);
    } else if (s.t <= t_end) {
      seg.encounter.push_back(s);
    } else {
      seg.post.push_back(s);
    }
  }
  return seg;
}

}  // namespace detail

/// Anchors the scenario at the candidate's minimum-separation instant
/// (earliest on ties, fixed by pair_search) and partitions each vessel's
/// aligned trajectory into pre / encounter / post segments. Window edges are
/// clipped to the trajectory span; empty segments are allowed. Scenario time
/// is 0 at vessel 1's first sample.
inline Scenario anchor_and_segment(const EncounterCandidate& c,
                                   const std::vector<geo::Trajectory>& pool1,
                                   const std::vector<geo::Trajectory>& pool2,
                                   const ScenarioConfig& cfg) {
  const auto& t1 = pool1[static_cast<std::size_t>(c.i)];
  const auto& t2 = pool2[static_cast<std::size_t>(c.j)];
  const double dt = t1.dt > 0.0 ? t1.dt : 10.0;

  Scenario s;
  s.i = c.i;
  s.j = c.j;
  s.offset_steps = c.offset_steps;
  s.t_star_s = static_cast<double>(c.k_star) * dt;
  s.t_early_s = cfg.t_early_s;
  s.t_after_s = cfg.t_after_s;
  s.d_min_observed_nm = c.d_min_observed_nm;
  s.config = cfg;

  std::vector<geo::TimedState> states1(t1.length()), states2(t2.length());
  for (std::size_t k = 0; k < t1.length(); ++k) {
    states1[k] = {static_cast<double>(k) * dt, t1.states[k].pos};
  }
  for (std::size_t l = 0; l < t2.length(); ++l) {
    states2[l] = {(static_cast<double>(l) + c.offset_steps) * dt, t2.states[l].pos};
  }
  const double t_start = s.t_star_s - cfg.t_early_s;
  const double t_end = s.t_star_s + cfg.t_after_s;
  s.flow1 = detail::split_segments(states1, t_start, t_end);
  s.flow2 = detail::split_segments(states2, t_start, t_end);
  return s;
}

namespace detail {

inline nlohmann::json segment_to_json(const std::vector<geo::TimedState>& seg) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : seg) {
    arr.push_back({s.t, s.pos.lat, s.pos.lon});
  }
  return arr;
}

inline std::vector<geo::TimedState> segment_from_json(const nlohmann::json& arr) {
  std::vector<geo::TimedState> seg;
  for (const auto& row : arr) {
    seg.push_back({row.at(0).get<double>(),
                   {row.at(1).get<double>(), row.at(2).get<double>()}});
  }
  return seg;
}

inline nlohmann::json scenario_config_to_json(const ScenarioConfig& c) {
  return {{"d_min_nm", c.d_min_nm},
          {"d_th_nm", c.d_th_nm},
          {"t_th_s", c.t_th_s},
          {"d_cpa_nm", c.d_cpa_nm},
          {"t_early_s", c.t_early_s},
          {"t_after_s", c.t_after_s},
          {"offset_stride_steps", c.offset_stride_steps},
          {"max_pairs", c.max_pairs}};
}

inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  c.d_min_nm = j.at("d_min_nm").get<double>();
  c.d_th_nm = j.at("d_th_nm").get<double>();
  c.t_th_s = j.at("t_th_s").get<double>();
  c.d_cpa_nm = j.at("d_cpa_nm").get<double>();
  c.t_early_s = j.at("t_early_s").get<double>();
  c.t_after_s = j.at("t_after_s").get<double>();
  c.offset_stride_steps = j.at("offset_stride_steps").get<int>();
  c.max_pairs = j.at("max_pairs").get<std::size_t>();
  return c;
}

}  // namespace detail

/// Canonical JSON document for one scenario. nlohmann::json keeps object keys
/// sorted and prints shortest round-trip numbers, so serialize-parse-serialize
/// is byte-identical.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  return {{"schema_version", kScenarioSchemaVersion},
          {"pair", {{"i", s.i}, {"j", s.j}, {"offset_steps", s.offset_steps}}},
          {"t_star_s", s.t_star_s},
          {"margins", {{"t_early_s", s.t_early_s}, {"t_after_s", s.t_after_s}}},
          {"config", detail::scenario_config_to_json(s.config)},
          {"d_min_observed_nm", s.d_min_observed_nm},
          {"vessels",
           {{{"role", "flow1"},
             {"segments",
              {{"pre", detail::segment_to_json(s.flow1.pre)},
               {"encounter", detail::segment_to_json(s.flow1.encounter)},
               {"post", detail::segment_to_json(s.flow1.post)}}}},
            {{"role", "flow2"},
             {"segments",
              {{"pre", detail::segment_to_json(s.flow2.pre)},
               {"encounter", detail::segment_to_json(s.flow2.encounter)},
               {"post", detail::segment_to_json(s.flow2.post)}}}}}}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kScenarioSchemaVersion) {
      raise(ErrorCode::FormatVersionMismatch, "unsupported scenario schema version");
    }
    Scenario s;
    s.i = j.at("pair").at("i").get<int>();
    s.j = j.at("pair").at("j").get<int>();
    s.offset_steps = j.at("pair").at("offset_steps").get<int>();
    s.t_star_s = j.at("t_star_s").get<double>();
    s.t_early_s = j.at("margins").at("t_early_s").get<double>();
    s.t_after_s = j.at("margins").at("t_after_s").get<double>();
    s.d_min_observed_nm = j.at("d_min_observed_nm").get<double>();
    s.config = detail::scenario_config_from_json(j.at("config"));
    for (const auto& vessel : j.at("vessels")) {
      VesselSegments seg;
      seg.pre = detail::segment_from_json(vessel.at("segments").at("pre"));
      seg.encounter = detail::segment_from_json(vessel.at("segments").at("encounter"));
      seg.post = detail::segment_from_json(vessel.at("segments").at("post"));
      if (vessel.at("role").get<std::string>() == "flow1") {
        s.flow1 = seg;
      } else {
        s.flow2 = seg;
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ParseError, std::string("bad scenario document: ") + e.what());
  }
}

inline std::string scenario_serialize(const Scenario& s) {
  return scenario_to_json(s).dump(2) + "\n";
}

}  // namespace forge::encounter
