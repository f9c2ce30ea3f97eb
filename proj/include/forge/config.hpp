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

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/encounter.hpp"
#include "forge/geo.hpp"
#include "forge/synth.hpp"
#include "forge/vae.hpp"

namespace forge::config {

inline constexpr int kConfigSchemaVersion = 1;

struct RouteConfig {
  double dt_s = 10.0;
  int window_steps = 64;
  double outlier_k_mad = 3.0;
  std::optional<geo::Bounds> start_box;
  std::optional<geo::Bounds> end_box;
};

struct SmoothingConfig {
  int window = 11;
  int order = 3;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  RouteConfig route;
  vae::ModelConfig model;  // seq_len mirrors route.window_steps
  SmoothingConfig smoothing;
  encounter::ScenarioConfig scenario;
  std::vector<geo::GeoPoint> roi_vertices;  // empty = no region configured
  synth::SynthConfig synth;

  geo::RegionOfInterest roi() const {
    if (roi_vertices.empty()) {
      raise(ErrorCode::ConfigInvalid, "this command needs a 'roi' polygon in the config");
    }
    return geo::RegionOfInterest(roi_vertices);
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& context,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    raise(ErrorCode::ConfigInvalid, context + " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      raise(ErrorCode::ConfigInvalid, context + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
inline void read_if(const nlohmann::json& obj, const char* key, T& into,
                    const std::string& context) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::ConfigInvalid, context + ": bad value for '" + key + "'");
  }
}

inline geo::Bounds read_box(const nlohmann::json& obj, const std::string& context) {
  check_keys(obj, context, {"lat_min", "lat_max", "lon_min", "lon_max"});
  geo::Bounds b;
  try {
    b.lat_min = obj.at("lat_min").get<double>();
    b.lat_max = obj.at("lat_max").get<double>();
    b.lon_min = obj.at("lon_min").get<double>();
    b.lon_max = obj.at("lon_max").get<double>();
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::ConfigInvalid, context + ": box needs lat/lon min/max numbers");
  }
  if (!b.well_formed()) {
    raise(ErrorCode::ConfigInvalid, context + ": box must satisfy min < max");
  }
  return b;
}

}  // namespace detail

/// Loads and fully validates a pipeline config. Unknown keys anywhere are an
/// error; referenced paths (out_dir) must exist.
inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::ConfigInvalid, "cannot open config '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }

  detail::check_keys(doc, path,
                     {"schema_version", "seed", "paths", "route", "model",
                      "smoothing", "scenario", "roi", "synth"});
  PipelineConfig cfg;
  int version = kConfigSchemaVersion;
  detail::read_if(doc, "schema_version", version, path);
  if (version != kConfigSchemaVersion) {
    raise(ErrorCode::ConfigInvalid, path + ": unsupported config schema version");
  }
  detail::read_if(doc, "seed", cfg.seed, path);

  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    detail::check_keys(p, path + ": paths", {"out_dir"});
    detail::read_if(p, "out_dir", cfg.out_dir, path + ": paths");
    if (!std::filesystem::is_directory(cfg.out_dir)) {
      raise(ErrorCode::ConfigInvalid,
            path + ": paths.out_dir '" + cfg.out_dir + "' is not a directory");
    }
  }

  if (doc.contains("route")) {
    const auto& r = doc.at("route");
    const std::string ctx = path + ": route";
    detail::check_keys(r, ctx,
                       {"dt_s", "window_steps", "outlier_k_mad", "start_box", "end_box"});
    detail::read_if(r, "dt_s", cfg.route.dt_s, ctx);
    detail::read_if(r, "window_steps", cfg.route.window_steps, ctx);
    detail::read_if(r, "outlier_k_mad", cfg.route.outlier_k_mad, ctx);
    if (r.contains("start_box")) cfg.route.start_box = detail::read_box(r.at("start_box"), ctx + ".start_box");
    if (r.contains("end_box")) cfg.route.end_box = detail::read_box(r.at("end_box"), ctx + ".end_box");
    if (!(cfg.route.dt_s > 0.0)) raise(ErrorCode::ConfigInvalid, ctx + ": dt_s must be > 0");
    if (cfg.route.window_steps < 4) {
      raise(ErrorCode::ConfigInvalid, ctx + ": window_steps must be >= 4");
    }
    if (!(cfg.route.outlier_k_mad >= 0.0)) {
      raise(ErrorCode::ConfigInvalid, ctx + ": outlier_k_mad must be >= 0");
    }
  }

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    const std::string ctx = path + ": model";
    detail::check_keys(m, ctx,
                       {"hidden_channels", "latent_dim", "beta", "epochs", "batch_size",
                        "learning_rate", "disable_conflux_ema", "disable_conflux_block",
                        "disable_beta_kl", "disable_sg_filter"});
    detail::read_if(m, "hidden_channels", cfg.model.hidden_channels, ctx);
    detail::read_if(m, "latent_dim", cfg.model.latent_dim, ctx);
    detail::read_if(m, "beta", cfg.model.beta, ctx);
    detail::read_if(m, "epochs", cfg.model.epochs, ctx);
    detail::read_if(m, "batch_size", cfg.model.batch_size, ctx);
    detail::read_if(m, "learning_rate", cfg.model.learning_rate, ctx);
    detail::read_if(m, "disable_conflux_ema", cfg.model.disable_conflux_ema, ctx);
    detail::read_if(m, "disable_conflux_block", cfg.model.disable_conflux_block, ctx);
    detail::read_if(m, "disable_beta_kl", cfg.model.disable_beta_kl, ctx);
    detail::read_if(m, "disable_sg_filter", cfg.model.disable_sg_filter, ctx);
  }
  cfg.model.seq_len = cfg.route.window_steps;
  try {
    cfg.model.validate();
  } catch (const Error& e) {
    raise(ErrorCode::ConfigInvalid, path + ": model: " + e.what());
  }

  if (doc.contains("smoothing")) {
    const auto& s = doc.at("smoothing");
    const std::string ctx = path + ": smoothing";
    detail::check_keys(s, ctx, {"window", "order"});
    detail::read_if(s, "window", cfg.smoothing.window, ctx);
    detail::read_if(s, "order", cfg.smoothing.order, ctx);
    if (cfg.smoothing.window < 3 || cfg.smoothing.window % 2 == 0 ||
        cfg.smoothing.order < 0 || cfg.smoothing.order >= cfg.smoothing.window) {
      raise(ErrorCode::ConfigInvalid, ctx + ": window must be odd and > order");
    }
  }

  if (doc.contains("scenario")) {
    const auto& s = doc.at("scenario");
    const std::string ctx = path + ": scenario";
    detail::check_keys(s, ctx,
                       {"d_min_nm", "d_th_nm", "t_th_s", "d_cpa_nm", "t_early_s",
                        "t_after_s", "offset_stride_steps", "max_pairs"});
    detail::read_if(s, "d_min_nm", cfg.scenario.d_min_nm, ctx);
    detail::read_if(s, "d_th_nm", cfg.scenario.d_th_nm, ctx);
    detail::read_if(s, "t_th_s", cfg.scenario.t_th_s, ctx);
    detail::read_if(s, "d_cpa_nm", cfg.scenario.d_cpa_nm, ctx);
    detail::read_if(s, "t_early_s", cfg.scenario.t_early_s, ctx);
    detail::read_if(s, "t_after_s", cfg.scenario.t_after_s, ctx);
    detail::read_if(s, "offset_stride_steps", cfg.scenario.offset_stride_steps, ctx);
    detail::read_if(s, "max_pairs", cfg.scenario.max_pairs, ctx);
    try {
      cfg.scenario.validate();
    } catch (const Error& e) {
      raise(ErrorCode::ConfigInvalid, ctx + ": " + e.what());
    }
  }

  if (doc.contains("roi")) {
    const auto& r = doc.at("roi");
    if (!r.is_array()) raise(ErrorCode::ConfigInvalid, path + ": roi must be an array");
    for (const auto& v : r) {
      if (!v.is_array() || v.size() != 2) {
        raise(ErrorCode::ConfigInvalid, path + ": roi vertices must be [lat, lon] pairs");
      }
      cfg.roi_vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    }
    try {
      geo::RegionOfInterest check(cfg.roi_vertices);
    } catch (const Error& e) {
      raise(ErrorCode::ConfigInvalid, path + ": roi: " + e.what());
    }
  }

  if (doc.contains("synth")) {
    const auto& s = doc.at("synth");
    const std::string ctx = path + ": synth";
    detail::check_keys(s, ctx, {"lat0", "lon0", "extent_deg", "noise_deg"});
    detail::read_if(s, "lat0", cfg.synth.lat0, ctx);
    detail::read_if(s, "lon0", cfg.synth.lon0, ctx);
    detail::read_if(s, "extent_deg", cfg.synth.extent_deg, ctx);
    detail::read_if(s, "noise_deg", cfg.synth.noise_deg, ctx);
    try {
      cfg.synth.validate();
    } catch (const Error& e) {
      raise(ErrorCode::ConfigInvalid, ctx + ": " + e.what());
    }
  }

  return cfg;
}

}  // namespace forge::config
