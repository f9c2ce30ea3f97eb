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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/config.hpp"
#include "forge/csv.hpp"
#include "forge/encounter.hpp"
#include "forge/metrics.hpp"
#include "forge/savgol.hpp"
#include "forge/synth.hpp"
#include "forge/vae.hpp"
#include "forge/weights_io.hpp"

namespace forge::pipeline {

inline constexpr int kIndexSchemaVersion = 1;

struct PreprocessSummary {
  std::size_t input = 0;
  std::size_t after_filter = 0;
  std::size_t after_resample = 0;
  std::size_t after_outlier = 0;
  std::size_t after_window = 0;
  double dt_s = 0.0;
  std::size_t length_steps = 0;
  std::string out_path;

  nlohmann::json to_json() const {
    return {{"input", input},
            {"after_filter", after_filter},
            {"after_resample", after_resample},
            {"after_outlier", after_outlier},
            {"after_window", after_window},
            {"dt_s", dt_s},
            {"length_steps", length_steps},
            {"out", out_path}};
  }
};

/// filter -> resample -> pairwise outlier removal -> window standardization,
/// then the dataset artifact is written. Tracks whose span is shorter than dt
/// are dropped at the resample stage.
inline PreprocessSummary cmd_preprocess(const config::PipelineConfig& cfg,
                                        const std::string& input_csv,
                                        const std::string& out_path) {
  if (!cfg.route.start_box || !cfg.route.end_box) {
    raise(ErrorCode::ConfigInvalid,
          "preprocess needs route.start_box and route.end_box in the config");
  }
  PreprocessSummary sum;
  sum.out_path = out_path;
  sum.dt_s = cfg.route.dt_s;
  sum.length_steps = static_cast<std::size_t>(cfg.route.window_steps);

  const auto raw = io::read_trajectories_csv(input_csv);
  sum.input = raw.size();

  auto filtered = geo::filter_route(raw, *cfg.route.start_box, *cfg.route.end_box);
  sum.after_filter = filtered.size();
  if (filtered.empty()) {
    raise(ErrorCode::NoTrajectoriesSurvive, "no trajectories survive the filter stage");
  }

  std::vector<geo::Trajectory> resampled;
  for (const auto& traj : filtered) {
    try {
      resampled.push_back(geo::resample_uniform(traj, cfg.route.dt_s));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SpanTooShort) throw;
    }
  }
  sum.after_resample = resampled.size();
  if (resampled.empty()) {
    raise(ErrorCode::NoTrajectoriesSurvive, "no trajectories survive the resample stage");
  }

  auto inliers = geo::outlier_filter_pairwise(resampled, cfg.route.outlier_k_mad);
  sum.after_outlier = inliers.size();
  if (inliers.empty()) {
    raise(ErrorCode::NoTrajectoriesSurvive, "no trajectories survive the outlier stage");
  }

  auto windowed = geo::standardize_window(
      inliers, static_cast<std::size_t>(cfg.route.window_steps));
  sum.after_window = windowed.size();
  if (windowed.empty()) {
    raise(ErrorCode::NoTrajectoriesSurvive, "no trajectories survive the window stage");
  }

  const std::string name = std::filesystem::path(input_csv).stem().string();
  io::save_route_dataset(geo::make_route_dataset(name, std::move(windowed)), out_path);
  return sum;
}

struct TrainSummary {
  int epochs = 0;
  std::size_t trajectories = 0;
  std::size_t parameter_count = 0;
  vae::LossParts first;
  vae::LossParts final;
  std::uint64_t seed = 0;
  std::string out_path;

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"trajectories", trajectories},
            {"parameter_count", parameter_count},
            {"first_loss",
             {{"total", first.total}, {"recon", first.recon}, {"kl", first.kl}}},
            {"final_loss",
             {{"total", final.total}, {"recon", final.recon}, {"kl", final.kl}}},
            {"seed", seed},
            {"out", out_path}};
  }
};

inline TrainSummary cmd_train(const config::PipelineConfig& cfg,
                              const std::string& dataset_path,
                              const std::string& out_path) {
  const geo::RouteDataset ds = io::load_route_dataset(dataset_path);
  vae::ModelConfig mcfg = cfg.model;
  mcfg.seq_len = static_cast<int>(ds.length());
  const vae::TrainResult result = vae::train(ds, mcfg, cfg.seed);
  vae::save_weights(result.weights, out_path);

  TrainSummary sum;
  sum.epochs = mcfg.epochs;
  sum.trajectories = ds.size();
  std::size_t n = 0;
  for (const auto& [name, t] : result.weights.params) n += t.size();
  sum.parameter_count = n;
  sum.first = result.history.front();
  sum.final = result.history.back();
  sum.seed = cfg.seed;
  sum.out_path = out_path;
  return sum;
}

struct GenerateSummary {
  std::size_t count = 0;
  std::size_t length_steps = 0;
  std::uint64_t seed = 0;
  std::string out_path;

  nlohmann::json to_json() const {
    return {{"count", count},
            {"length_steps", length_steps},
            {"seed", seed},
            {"out", out_path}};
  }
};

inline GenerateSummary cmd_generate(const config::PipelineConfig& cfg,
                                    const std::string& weights_path,
                                    std::size_t count, std::uint64_t seed,
                                    const std::string& out_csv) {
  const vae::ModelWeights weights = vae::load_weights(weights_path);
  const auto trajs = vae::generate(weights, count, seed, 0, cfg.route.dt_s);
  io::write_trajectories_csv(out_csv, trajs);
  GenerateSummary sum;
  sum.count = trajs.size();
  sum.length_steps = trajs.empty() ? 0 : trajs.front().length();
  sum.seed = seed;
  sum.out_path = out_csv;
  return sum;
}

struct SmoothSummary {
  std::size_t count = 0;
  int window = 0;
  int order = 0;
  bool passthrough = false;
  std::string out_path;

  nlohmann::json to_json() const {
    return {{"count", count},
            {"window", window},
            {"order", order},
            {"passthrough", passthrough},
            {"out", out_path}};
  }
};

/// Savitzky-Golay smoothing per trajectory. Under model.disable_sg_filter the
/// command validates and rewrites the input unchanged, so ablation runs keep
/// the same artifact chain.
inline SmoothSummary cmd_smooth(const config::PipelineConfig& cfg,
                                const std::string& input_csv,
                                const std::string& out_csv) {
  auto trajs = io::read_trajectories_csv(input_csv);
  SmoothSummary sum;
  sum.count = trajs.size();
  sum.window = cfg.smoothing.window;
  sum.order = cfg.smoothing.order;
  sum.passthrough = cfg.model.disable_sg_filter;
  sum.out_path = out_csv;
  if (!cfg.model.disable_sg_filter) {
    for (auto& traj : trajs) {
      traj = eval::savgol_smooth(traj, cfg.smoothing.window, cfg.smoothing.order);
    }
  }
  io::write_trajectories_csv(out_csv, trajs);
  return sum;
}

/// Metric evaluation in the reference dataset's normalized space. Generated
/// tracks may overshoot the reference extent slightly (smoothing), so they
/// are clamped into [0,1]; reference tracks are in bounds by construction.
inline eval::MetricsReport cmd_evaluate(const config::PipelineConfig& cfg,
                                        const std::string& gen_csv,
                                        const std::string& ref_dataset_path) {
  (void)cfg;
  const auto gen = io::read_trajectories_csv(gen_csv);
  const geo::RouteDataset ref = io::load_route_dataset(ref_dataset_path);
  if (gen.empty()) raise(ErrorCode::EmptyDataset, "no generated trajectories");
  for (const auto& t : gen) {
    if (t.length() != ref.length()) {
      raise(ErrorCode::LengthMismatch,
            "generated length " + std::to_string(t.length()) +
                " vs reference length " + std::to_string(ref.length()));
    }
  }
  std::vector<geo::NormalizedSequence> gen_seq, ref_seq;
  gen_seq.reserve(gen.size());
  ref_seq.reserve(ref.size());
  for (const auto& t : gen) gen_seq.push_back(geo::normalize_clamped(t, ref.bounds));
  for (const auto& t : ref.trajectories) ref_seq.push_back(geo::normalize(t, ref.bounds));

  eval::MetricsReport report;
  const auto [mae, mse] = eval::pairwise_errors(gen_seq, ref_seq);
  report.mae = mae;
  report.mse = mse;
  report.dm = eval::frechet_dm(gen_seq, ref_seq);
  report.mmd = eval::mmd_squared(gen_seq, ref_seq, std::nullopt, &report.bandwidth);
  report.ref_count = ref_seq.size();
  report.gen_count = gen_seq.size();
  return report;
}

inline nlohmann::json metrics_to_json(const eval::MetricsReport& r) {
  return {{"mae", r.mae},       {"mse", r.mse},
          {"dm", r.dm},         {"mmd", r.mmd},
          {"m", r.ref_count},   {"n", r.gen_count},
          {"bandwidth", r.bandwidth}};
}

struct PairSummary {
  std::size_t pool1 = 0;
  std::size_t pool2 = 0;
  std::size_t candidates = 0;
  std::size_t scenarios = 0;
  std::string out_dir;

  nlohmann::json to_json() const {
    return {{"pool1", pool1},
            {"pool2", pool2},
            {"candidates", candidates},
            {"scenarios", scenarios},
            {"out", out_dir}};
  }
};

/// Pairs two trajectory pools, filters safety-critical candidates and writes
/// one scenario document per survivor plus an index file.
inline PairSummary cmd_pair(const config::PipelineConfig& cfg,
                            const std::string& csv1, const std::string& csv2,
                            const std::string& out_dir) {
  const geo::RegionOfInterest roi = cfg.roi();
  const auto pool1 = io::read_trajectories_csv(csv1);
  const auto pool2 = io::read_trajectories_csv(csv2);
  if (pool1.empty() || pool2.empty()) {
    raise(ErrorCode::EmptyDataset, "both trajectory pools must be non-empty");
  }
  double dt = 0.0;
  for (const auto* pool : {&pool1, &pool2}) {
    for (const auto& t : *pool) {
      if (!(t.dt > 0.0)) {
        raise(ErrorCode::NonUniformSampling,
              "trajectory '" + t.id + "' is not uniformly sampled");
      }
      if (dt == 0.0) dt = t.dt;
      if (t.dt != dt) {
        raise(ErrorCode::NonUniformSampling,
              "trajectory '" + t.id + "' uses a different sampling interval");
      }
    }
  }

  std::filesystem::create_directories(out_dir);
  const auto candidates = encounter::pair_search(pool1, pool2, roi, cfg.scenario);

  PairSummary sum;
  sum.pool1 = pool1.size();
  sum.pool2 = pool2.size();
  sum.candidates = candidates.size();
  sum.out_dir = out_dir;

  nlohmann::json index_entries = nlohmann::json::array();
  std::size_t emitted = 0;
  for (const auto& cand : candidates) {
    if (emitted >= cfg.scenario.max_pairs) break;
    if (!encounter::safety_filter(cand, pool1, pool2, cfg.scenario)) continue;
    const encounter::Scenario scenario =
        encounter::anchor_and_segment(cand, pool1, pool2, cfg.scenario);
    char name[32];
    std::snprintf(name, sizeof(name), "scenario_%06zu.json", emitted);
    const std::string file = (std::filesystem::path(out_dir) / name).string();
    std::ofstream out(file, std::ios::trunc);
    if (!out) raise(ErrorCode::IoFailure, "cannot write '" + file + "'");
    out << encounter::scenario_serialize(scenario);
    index_entries.push_back({{"file", name},
                             {"i", scenario.i},
                             {"j", scenario.j},
                             {"t_star_s", scenario.t_star_s},
                             {"d_min_observed_nm", scenario.d_min_observed_nm}});
    ++emitted;
  }
  sum.scenarios = emitted;

  const nlohmann::json index = {{"schema_version", kIndexSchemaVersion},
                                {"scenarios", index_entries}};
  const std::string index_path = (std::filesystem::path(out_dir) / "index.json").string();
  std::ofstream out(index_path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot write '" + index_path + "'");
  out << index.dump(2) << '\n';
  return sum;
}

struct SynthSummary {
  std::string kind;
  int flow = 1;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out_path;

  nlohmann::json to_json() const {
    return {{"kind", kind}, {"flow", flow},      {"count", count},
            {"seed", seed}, {"out", out_path}};
  }
};

/// Synthetic corpus families for tests and demos: "arc", "scurve", or
/// "crossing" (the latter picks one of the two crossing flows via `flow`).
inline SynthSummary cmd_synth(const config::PipelineConfig& cfg,
                              const std::string& kind, int flow, std::size_t count,
                              std::uint64_t seed, const std::string& out_csv) {
  if (count < 1) raise(ErrorCode::InvalidArgument, "count must be >= 1");
  const auto steps = static_cast<std::size_t>(cfg.route.window_steps);
  std::vector<geo::Trajectory> trajs;
  if (kind == "arc") {
    trajs = synth::make_arcs(cfg.synth, count, steps, cfg.route.dt_s, seed);
  } else if (kind == "scurve") {
    trajs = synth::make_scurves(cfg.synth, count, steps, cfg.route.dt_s, seed);
  } else if (kind == "crossing") {
    trajs = synth::make_crossing_flow(cfg.synth, flow, count, steps, cfg.route.dt_s, seed);
  } else {
    raise(ErrorCode::InvalidArgument,
          "unknown synth kind '" + kind + "' (use arc, scurve or crossing)");
  }
  io::write_trajectories_csv(out_csv, trajs);
  SynthSummary sum;
  sum.kind = kind;
  sum.flow = flow;
  sum.count = count;
  sum.seed = seed;
  sum.out_path = out_csv;
  return sum;
}

}  // namespace forge::pipeline
