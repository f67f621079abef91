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

#ifndef WSIREG_PIPELINE_HPP_
#define WSIREG_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wsireg/deform.hpp"
#include "wsireg/landmarks.hpp"
#include "wsireg/raster.hpp"
#include "wsireg/rigid.hpp"
#include "wsireg/synth.hpp"

namespace wsireg {

struct PipelineConfig {
  Index downsample_factor = 32;
  double trim_threshold = 0.02;
  MatchConfig match;
  DeformConfig deform;
  double spacing_um_at_full_res = 0.23;

  void validate() const;
  double working_spacing_um() const { return spacing_um_at_full_res * double(downsample_factor); }
};

/// A library error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what(), Verbatim{}), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RegisterOptions {
  std::optional<std::filesystem::path> landmarks;  // CSV in working-scale coordinates
  std::optional<std::filesystem::path> rigid;      // reuse a saved rigid.json, skipping template matching
};

struct RegistrationReport {
  std::filesystem::path fixed_path;
  std::filesystem::path moving_path;
  PipelineConfig config;
  CropRect fixed_crop;
  CropRect moving_crop;
  Index fixed_width = 0, fixed_height = 0;    // working scale, after trimming
  Index moving_width = 0, moving_height = 0;
  RigidEstimate rigid;
  LossTerms initial;
  LossTerms final;
  int iterations = 0;
  int levels_used = 0;
  std::optional<ImageEval> landmarks;
  std::map<std::string, std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::map<std::string, double> timings_ms;
};

struct FailedPair {
  std::string pair_id;
  std::string stage;
  std::string message;
};

struct CohortReport {
  CohortEval eval;
  std::vector<FailedPair> failures;
};

/// In-memory result of the full two-step registration of one pair.
struct PairRegistration {
  GrayImage fixed;          // working scale, trimmed
  GrayImage moving;         // working scale, trimmed
  GrayImage moving_rigid;   // moving on the fixed grid after step 1
  GrayImage warped;         // after step 2
  DeformResult deform;
  RegistrationReport report;
};

/// Loads, preprocesses and registers a pair without touching the filesystem
/// beyond reading the inputs.
PairRegistration run_registration(const std::filesystem::path& fixed_path, const std::filesystem::path& moving_path,
                                  const PipelineConfig& config, const RegisterOptions& options = {});

/// Runs the pipeline and writes rigid.json, field.dfld, trace.csv, warped.png,
/// checkerboard.png and report.json into out_dir. Nothing is written when any
/// stage fails.
RegistrationReport cmd_register(const std::filesystem::path& fixed_path, const std::filesystem::path& moving_path,
                                const PipelineConfig& config, const std::filesystem::path& out_dir,
                                const RegisterOptions& options = {});

/// Registers every pair listed in a manifest and writes the cohort metric.
/// Failed pairs are reported and excluded from the median.
CohortReport cmd_evaluate(const std::filesystem::path& manifest_path, const std::filesystem::path& out_path,
                          int workers = 1, const std::optional<PipelineConfig>& config_override = std::nullopt);

/// Writes fixed.png, moving.png, landmarks.csv, true_field.dfld and
/// synth.json for the spec in spec_path. Returns the written paths.
std::vector<std::filesystem::path> cmd_synth(const std::filesystem::path& spec_path,
                                             const std::filesystem::path& out_dir);

/// 8 x 8 grid of tiles alternating between a and b.
GrayImage checkerboard(const GrayImage& a, const GrayImage& b);

// JSON mappings. Parsing is strict: unknown keys are rejected, missing keys
// keep their defaults.
nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RigidEstimate& est);
RigidEstimate rigid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortReport& cohort);
nlohmann::json to_json(const RegistrationReport& report);

}  // namespace wsireg

#endif  // WSIREG_PIPELINE_HPP_
