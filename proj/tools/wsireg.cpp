// Copyright 2026 The wsireg Authors
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

// Command-line front end: register, evaluate and synth subcommands.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wsireg/io.hpp"
#include "wsireg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wsireg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitPipeline = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidSpec:
      return kExitUsage;
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
      return kExitIo;
    default:
      return kExitPipeline;
  }
}

PipelineConfig load_config(const std::optional<std::string>& path) {
  if (!path) return PipelineConfig{};
  const std::string text = read_text(*path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, *path + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step whole-slide image registration"};
  app.require_subcommand(1);

  std::string fixed, moving, out_dir;
  std::optional<std::string> config_path, landmarks_path, rigid_path;
  auto* reg = app.add_subcommand("register", "Register a moving image onto a fixed image");
  reg->add_option("--fixed", fixed, "Fixed (reference) image")->required();
  reg->add_option("--moving", moving, "Moving image")->required();
  reg->add_option("--config", config_path, "Pipeline configuration JSON");
  reg->add_option("--out", out_dir, "Output directory")->required();
  reg->add_option("--landmarks", landmarks_path, "Landmark CSV to evaluate after registration");
  reg->add_option("--rigid", rigid_path, "Reuse a saved rigid.json instead of template matching");

  std::string manifest, out_path;
  int workers = 1;
  std::optional<std::string> eval_config_path;
  auto* eval = app.add_subcommand("evaluate", "Register a cohort and compute the landmark metric");
  eval->add_option("--manifest", manifest, "Cohort manifest JSON")->required();
  eval->add_option("--out", out_path, "Output JSON path")->required();
  eval->add_option("--workers", workers, "Pairs registered concurrently")->check(CLI::PositiveNumber);
  eval->add_option("--config", eval_config_path, "Pipeline configuration JSON (overrides the manifest)");

  std::string spec_path, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic pair with ground truth");
  synth->add_option("--spec", spec_path, "Synthetic pair spec JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*reg) {
      RegisterOptions opts;
      if (landmarks_path) opts.landmarks = *landmarks_path;
      if (rigid_path) opts.rigid = *rigid_path;
      const RegistrationReport report = cmd_register(fixed, moving, load_config(config_path), out_dir, opts);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "rigid: rotated_180=" << (report.rigid.rotated_180 ? "true" : "false") << " dx=" << report.rigid.dx
                << " dy=" << report.rigid.dy << " score=" << report.rigid.score << "\n"
                << "deform: mse " << report.initial.mse << " -> " << report.final.mse << "\n";
      if (report.landmarks) std::cout << "landmarks: p90 " << report.landmarks->p90_um << " um\n";
      std::cout << "report: " << report.outputs.at("report").string() << "\n";
    } else if (*eval) {
      std::optional<PipelineConfig> override_cfg;
      if (eval_config_path) override_cfg = load_config(eval_config_path);
      const CohortReport cohort = cmd_evaluate(manifest, out_path, workers, override_cfg);
      for (const auto& f : cohort.failures) {
        std::cerr << "warning: pair " << f.pair_id << " failed at " << f.stage << ": " << f.message << "\n";
      }
      if (!cohort.failures.empty()) std::cerr << "warning: " << cohort.failures.size() << " pair(s) failed\n";
      std::cout << "median_p90_um: " << cohort.eval.median_p90_um << " over " << cohort.eval.per_image.size()
                << " pair(s)\n";
    } else if (*synth) {
      for (const auto& p : cmd_synth(spec_path, synth_out)) std::cout << p.string() << "\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  }
  return 0;
}
