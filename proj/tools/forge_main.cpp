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

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "forge/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  bool json = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed) {
  cmd->add_option("--config", args.config_path, "pipeline config file (JSON)")
      ->required();
  cmd->add_option("--out", args.out, "output path");
  cmd->add_flag("--json", args.json, "print the summary as JSON on stdout");
  if (with_seed) {
    cmd->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
  }
}

forge::config::PipelineConfig load_config(CommonArgs& args) {
  auto cfg = forge::config::load_pipeline_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

std::string default_out(const forge::config::PipelineConfig& cfg,
                        const CommonArgs& args, const char* name) {
  if (!args.out.empty()) return args.out;
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

void print_summary(const CommonArgs& args, const nlohmann::json& summary) {
  if (args.json) {
    std::cout << summary.dump(2) << std::endl;
  } else {
    for (const auto& [key, value] : summary.items()) {
      std::cout << key << ": " << value.dump() << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory generation and encounter-scenario construction toolkit"};
  app.require_subcommand(1);

  CommonArgs pre_args;
  std::string pre_input;
  auto* pre = app.add_subcommand("preprocess",
                                 "filter, resample, de-outlier and window a raw CSV");
  add_common(pre, pre_args, false);
  pre->add_option("--input", pre_input, "raw trajectory CSV")->required();

  CommonArgs train_args;
  std::string train_dataset;
  auto* train = app.add_subcommand("train", "train a model on a dataset artifact");
  add_common(train, train_args, true);
  train->add_option("--dataset", train_dataset, "dataset artifact (JSON)")->required();

  CommonArgs gen_args;
  std::string gen_weights;
  std::size_t gen_count = 1000;
  auto* gen = app.add_subcommand("generate", "sample trajectories from trained weights");
  add_common(gen, gen_args, true);
  gen->add_option("--weights", gen_weights, "weights file")->required();
  gen->add_option("--count", gen_count, "number of trajectories");

  CommonArgs smooth_args;
  std::string smooth_input;
  auto* smooth = app.add_subcommand("smooth", "Savitzky-Golay smooth a trajectory CSV");
  add_common(smooth, smooth_args, false);
  smooth->add_option("--input", smooth_input, "trajectory CSV")->required();

  CommonArgs eval_args;
  std::string eval_gen, eval_ref;
  auto* evaluate = app.add_subcommand("evaluate",
                                      "score generated tracks against a reference dataset");
  add_common(evaluate, eval_args, false);
  evaluate->add_option("--generated", eval_gen, "generated trajectory CSV")->required();
  evaluate->add_option("--reference", eval_ref, "reference dataset artifact")->required();

  CommonArgs pair_args;
  std::string pair_csv1, pair_csv2;
  auto* pair = app.add_subcommand("pair",
                                  "build safety-critical scenarios from two trajectory pools");
  add_common(pair, pair_args, false);
  pair->add_option("--flow1", pair_csv1, "first trajectory pool CSV")->required();
  pair->add_option("--flow2", pair_csv2, "second trajectory pool CSV")->required();

  CommonArgs synth_args;
  std::string synth_kind = "crossing";
  int synth_flow = 1;
  std::size_t synth_count = 100;
  auto* synth = app.add_subcommand("synth", "write a synthetic test corpus CSV");
  add_common(synth, synth_args, true);
  synth->add_option("--kind", synth_kind, "arc, scurve or crossing");
  synth->add_option("--flow", synth_flow, "crossing flow index (1 or 2)");
  synth->add_option("--count", synth_count, "number of trajectories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pre->parsed()) {
      auto cfg = load_config(pre_args);
      const auto out = default_out(cfg, pre_args, "dataset.json");
      print_summary(pre_args, forge::pipeline::cmd_preprocess(cfg, pre_input, out).to_json());
    } else if (train->parsed()) {
      auto cfg = load_config(train_args);
      const auto out = default_out(cfg, train_args, "weights.bin");
      print_summary(train_args, forge::pipeline::cmd_train(cfg, train_dataset, out).to_json());
    } else if (gen->parsed()) {
      auto cfg = load_config(gen_args);
      const auto out = default_out(cfg, gen_args, "generated.csv");
      print_summary(gen_args, forge::pipeline::cmd_generate(cfg, gen_weights, gen_count,
                                                            cfg.seed, out)
                                  .to_json());
    } else if (smooth->parsed()) {
      auto cfg = load_config(smooth_args);
      const auto out = default_out(cfg, smooth_args, "smoothed.csv");
      print_summary(smooth_args,
                    forge::pipeline::cmd_smooth(cfg, smooth_input, out).to_json());
    } else if (evaluate->parsed()) {
      auto cfg = load_config(eval_args);
      const auto report = forge::pipeline::cmd_evaluate(cfg, eval_gen, eval_ref);
      const auto doc = forge::pipeline::metrics_to_json(report);
      if (!eval_args.out.empty()) {
        std::ofstream out(eval_args.out, std::ios::trunc);
        if (!out) {
          forge::raise(forge::ErrorCode::IoFailure,
                       "cannot write '" + eval_args.out + "'");
        }
        out << doc.dump(2) << '\n';
      }
      std::cout << doc.dump(2) << std::endl;
    } else if (pair->parsed()) {
      auto cfg = load_config(pair_args);
      const auto out = default_out(cfg, pair_args, "scenarios");
      print_summary(pair_args,
                    forge::pipeline::cmd_pair(cfg, pair_csv1, pair_csv2, out).to_json());
    } else if (synth->parsed()) {
      auto cfg = load_config(synth_args);
      const auto out = default_out(cfg, synth_args, "synthetic.csv");
      print_summary(synth_args,
                    forge::pipeline::cmd_synth(cfg, synth_kind, synth_flow, synth_count,
                                               cfg.seed, out)
                        .to_json());
    }
  } catch (const forge::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
