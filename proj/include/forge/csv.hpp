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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/geo.hpp"

namespace forge::io {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Integers print without a fractional part (timestamps are usually whole
/// seconds); everything else falls back to the lossless form.
inline std::string format_timestamp(double t) {
  if (std::isfinite(t) && t == std::floor(t) && std::abs(t) < 1e15) {
    return std::to_string(static_cast<long long>(t));
  }
  return format_double(t);
}

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
inline long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const auto doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

inline int parse_int_field(const std::string& s, std::size_t pos, std::size_t len) {
  int v = 0;
  const auto res = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  if (res.ec != std::errc() || res.ptr != s.data() + pos + len) {
    raise(ErrorCode::ParseError, "bad number in timestamp '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Parses "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+hh:mm|-hh:mm]" to epoch seconds.
inline double parse_iso8601(const std::string& s) {
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') {
    raise(ErrorCode::ParseError, "bad ISO-8601 timestamp '" + s + "'");
  }
  const int year = detail::parse_int_field(s, 0, 4);
  const int month = detail::parse_int_field(s, 5, 2);
  const int day = detail::parse_int_field(s, 8, 2);
  const int hour = detail::parse_int_field(s, 11, 2);
  const int minute = detail::parse_int_field(s, 14, 2);
  const int second = detail::parse_int_field(s, 17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 ||
      minute > 59 || second > 60) {
    raise(ErrorCode::ParseError, "out-of-range ISO-8601 timestamp '" + s + "'");
  }
  std::size_t pos = 19;
  double frac = 0.0;
  if (pos < s.size() && s[pos] == '.') {
    std::size_t end = pos + 1;
    while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
    if (end == pos + 1) raise(ErrorCode::ParseError, "empty fraction in '" + s + "'");
    frac = std::stod(s.substr(pos, end - pos));
    pos = end;
  }
  double offset_s = 0.0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      // UTC suffix
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() &&
               s[pos + 3] == ':') {
      const int oh = detail::parse_int_field(s, pos + 1, 2);
      const int om = detail::parse_int_field(s, pos + 4, 2);
      offset_s = (s[pos] == '+' ? 1.0 : -1.0) * (oh * 3600.0 + om * 60.0);
    } else {
      raise(ErrorCode::ParseError, "bad ISO-8601 suffix in '" + s + "'");
    }
  }
  const double base = static_cast<double>(detail::days_from_civil(year, month, day)) * 86400.0;
  return base + hour * 3600.0 + minute * 60.0 + second + frac - offset_s;
}

/// Numeric epoch seconds or ISO-8601, detected by the presence of ':'.
inline double parse_timestamp(const std::string& field) {
  if (field.find(':') != std::string::npos) return parse_iso8601(field);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    raise(ErrorCode::ParseError, "bad timestamp '" + field + "'");
  }
  return v;
}

/// Reads trajectories from CSV with header id,timestamp,lat,lon. Rows of one
/// id must be contiguous and sorted by time. When every gap within a
/// trajectory is identical, dt is filled in; otherwise it stays 0 (irregular).
inline std::vector<geo::Trajectory> read_trajectories_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open '" + path + "'");

  auto fail = [&path](std::size_t line_no, const std::string& msg) {
    raise(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": " + msg);
  };

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,timestamp,lat,lon") {
    fail(line_no, "expected header 'id,timestamp,lat,lon'");
  }

  std::vector<geo::Trajectory> out;
  std::unordered_set<std::string> finished;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    {
      std::size_t start = 0;
      for (int f = 0; f < 4; ++f) {
        const std::size_t comma = line.find(',', start);
        if (f < 3) {
          if (comma == std::string::npos) fail(line_no, "expected 4 fields");
          fields[static_cast<std::size_t>(f)] = line.substr(start, comma - start);
          start = comma + 1;
        } else {
          if (comma != std::string::npos) fail(line_no, "expected 4 fields");
          fields[3] = line.substr(start);
        }
      }
    }
    const std::string& id = fields[0];
    if (id.empty()) fail(line_no, "empty id");

    double t = 0.0;
    try {
      t = parse_timestamp(fields[1]);
    } catch (const Error& e) {
      fail(line_no, e.what());
    }
    auto parse_coord = [&](const std::string& s, const char* what) {
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        fail(line_no, std::string("bad ") + what + " '" + s + "'");
      }
      return v;
    };
    const double lat = parse_coord(fields[2], "lat");
    const double lon = parse_coord(fields[3], "lon");
    const geo::GeoPoint pos{lat, lon};
    if (!geo::is_valid(pos)) fail(line_no, "coordinates out of range");

    if (out.empty() || out.back().id != id) {
      if (finished.contains(id)) {
        fail(line_no, "rows for id '" + id + "' are not contiguous");
      }
      if (!out.empty()) finished.insert(out.back().id);
      out.push_back(geo::Trajectory{id, {}, 0.0});
    }
    if (!out.back().states.empty() && !(t > out.back().states.back().t)) {
      fail(line_no, "timestamps for id '" + id + "' are not strictly increasing");
    }
    out.back().states.push_back({t, pos});
  }

  for (auto& traj : out) {
    if (traj.states.size() < 2) continue;
    const double dt = traj.states[1].t - traj.states[0].t;
    bool uniform = true;
    for (std::size_t k = 1; k + 1 < traj.states.size() && uniform; ++k) {
      uniform = std::abs((traj.states[k + 1].t - traj.states[k].t) - dt) <=
                1e-9 * std::max(1.0, dt);
    }
    if (uniform) traj.dt = dt;
  }
  return out;
}

inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<geo::Trajectory>& trajs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out << "id,timestamp,lat,lon\n";
  for (const auto& traj : trajs) {
    for (const auto& s : traj.states) {
      out << traj.id << ',' << format_timestamp(s.t) << ',' << format_double(s.pos.lat)
          << ',' << format_double(s.pos.lon) << '\n';
    }
  }
  if (!out) raise(ErrorCode::IoFailure, "short write to '" + path + "'");
}

inline constexpr int kDatasetSchemaVersion = 1;

/// Preprocessed route artifact: uniform-length trajectories stored as parallel
/// lat/lon arrays with a start time, so timestamps rebuild as t0 + i*dt.
inline void save_route_dataset(const geo::RouteDataset& ds, const std::string& path) {
  nlohmann::json trajs = nlohmann::json::array();
  for (const auto& t : ds.trajectories) {
    std::vector<double> lat(t.length()), lon(t.length());
    for (std::size_t i = 0; i < t.length(); ++i) {
      lat[i] = t.states[i].pos.lat;
      lon[i] = t.states[i].pos.lon;
    }
    trajs.push_back({{"id", t.id},
                     {"t0_s", t.states.empty() ? 0.0 : t.states.front().t},
                     {"lat", lat},
                     {"lon", lon}});
  }
  const nlohmann::json doc = {
      {"schema_version", kDatasetSchemaVersion},
      {"name", ds.name},
      {"dt_s", ds.dt()},
      {"length_steps", ds.length()},
      {"bounds",
       {{"lat_min", ds.bounds.lat_min},
        {"lat_max", ds.bounds.lat_max},
        {"lon_min", ds.bounds.lon_min},
        {"lon_max", ds.bounds.lon_max}}},
      {"trajectories", trajs}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) raise(ErrorCode::IoFailure, "short write to '" + path + "'");
}

inline geo::RouteDataset load_route_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ParseError, path + ": " + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kDatasetSchemaVersion) {
      raise(ErrorCode::FormatVersionMismatch,
            path + ": unsupported dataset schema version");
    }
    const double dt = doc.at("dt_s").get<double>();
    const auto length = doc.at("length_steps").get<std::size_t>();
    geo::RouteDataset ds;
    ds.name = doc.at("name").get<std::string>();
    const auto& b = doc.at("bounds");
    ds.bounds = {b.at("lat_min").get<double>(), b.at("lat_max").get<double>(),
                 b.at("lon_min").get<double>(), b.at("lon_max").get<double>()};
    for (const auto& jt : doc.at("trajectories")) {
      geo::Trajectory traj;
      traj.id = jt.at("id").get<std::string>();
      traj.dt = dt;
      const auto lat = jt.at("lat").get<std::vector<double>>();
      const auto lon = jt.at("lon").get<std::vector<double>>();
      const double t0 = jt.at("t0_s").get<double>();
      if (lat.size() != length || lon.size() != length) {
        raise(ErrorCode::ParseError,
              path + ": trajectory '" + traj.id + "' has wrong length");
      }
      for (std::size_t i = 0; i < length; ++i) {
        const geo::GeoPoint pos{lat[i], lon[i]};
        if (!ds.bounds.contains(pos)) {
          raise(ErrorCode::OutOfBounds,
                path + ": trajectory '" + traj.id + "' leaves dataset bounds");
        }
        traj.states.push_back({t0 + static_cast<double>(i) * dt, pos});
      }
      ds.trajectories.push_back(std::move(traj));
    }
    if (ds.trajectories.empty()) {
      raise(ErrorCode::EmptyDataset, path + ": dataset has no trajectories");
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ParseError, path + ": " + e.what());
  }
}

}  // namespace forge::io
