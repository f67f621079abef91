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

#include "wsireg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include "wsireg/io.hpp"

namespace wsireg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, ErrorCode code, const std::string& where) {
  if (!j.is_object()) config_fail(code, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      config_fail(code, "unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_number(const json& j, const char* key, T& out, ErrorCode code) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) config_fail(code, std::string("'") + key + "' must be an integer");
    out = v.get<T>();
  } else {
    if (!v.is_number()) config_fail(code, std::string("'") + key + "' must be a number");
    out = v.get<T>();
  }
}

void read_bool(const json& j, const char* key, bool& out, ErrorCode code) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean()) config_fail(code, std::string("'") + key + "' must be a boolean");
  out = j.at(key).get<bool>();
}

json parse_json_file(const fs::path& path, ErrorCode code) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    config_fail(code, path.string() + ": " + e.what());
  }
}

json crop_json(const CropRect& r) {
  return {{"x0", r.x0}, {"y0", r.y0}, {"width", r.width}, {"height", r.height}};
}

json terms_json(const LossTerms& t) { return {{"mse", t.mse}, {"smooth", t.smooth}, {"total", t.total}}; }

class StageClock {
 public:
  explicit StageClock(std::map<std::string, double>& sink) : sink_(sink) {}

  // Runs fn, files its wall time under stage, and tags library errors with it.
  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, start);
      } else {
        auto result = fn();
        record(stage, start);
        return result;
      }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(stage, e);
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    sink_[stage] += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  std::map<std::string, double>& sink_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void PipelineConfig::validate() const {
  if (downsample_factor < 1) config_fail(ErrorCode::InvalidConfig, "downsample_factor must be >= 1");
  if (!(trim_threshold >= 0.0 && trim_threshold < 1.0)) {
    config_fail(ErrorCode::InvalidConfig, "trim_threshold must lie in [0, 1)");
  }
  if (!(spacing_um_at_full_res > 0.0)) config_fail(ErrorCode::InvalidConfig, "spacing_um_at_full_res must be positive");
  match.validate();
  deform.validate();
}

json to_json(const PipelineConfig& cfg) {
  return {{"downsample_factor", cfg.downsample_factor},
          {"trim_threshold", cfg.trim_threshold},
          {"match",
           {{"stride", cfg.match.stride},
            {"refine_radius", cfg.match.refine_radius},
            {"min_overlap_frac", cfg.match.min_overlap_frac}}},
          {"deform",
           {{"lr0", cfg.deform.lr0},
            {"iterations", cfg.deform.iterations},
            {"lambda_smooth", cfg.deform.lambda_smooth},
            {"beta1", cfg.deform.beta1},
            {"beta2", cfg.deform.beta2},
            {"epsilon", cfg.deform.epsilon},
            {"eta_min", cfg.deform.eta_min},
            {"levels", cfg.deform.levels}}},
          {"spacing_um_at_full_res", cfg.spacing_um_at_full_res}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  constexpr auto code = ErrorCode::InvalidConfig;
  check_keys(j, {"downsample_factor", "trim_threshold", "match", "deform", "spacing_um_at_full_res"}, code, "config");
  PipelineConfig cfg;
  read_number(j, "downsample_factor", cfg.downsample_factor, code);
  read_number(j, "trim_threshold", cfg.trim_threshold, code);
  read_number(j, "spacing_um_at_full_res", cfg.spacing_um_at_full_res, code);
  if (j.contains("match")) {
    const json& m = j.at("match");
    check_keys(m, {"stride", "refine_radius", "min_overlap_frac"}, code, "config.match");
    read_number(m, "stride", cfg.match.stride, code);
    read_number(m, "refine_radius", cfg.match.refine_radius, code);
    read_number(m, "min_overlap_frac", cfg.match.min_overlap_frac, code);
  }
  if (j.contains("deform")) {
    const json& d = j.at("deform");
    check_keys(d, {"lr0", "iterations", "lambda_smooth", "beta1", "beta2", "epsilon", "eta_min", "levels"}, code,
               "config.deform");
    read_number(d, "lr0", cfg.deform.lr0, code);
    read_number(d, "iterations", cfg.deform.iterations, code);
    read_number(d, "lambda_smooth", cfg.deform.lambda_smooth, code);
    read_number(d, "beta1", cfg.deform.beta1, code);
    read_number(d, "beta2", cfg.deform.beta2, code);
    read_number(d, "epsilon", cfg.deform.epsilon, code);
    read_number(d, "eta_min", cfg.deform.eta_min, code);
    read_number(d, "levels", cfg.deform.levels, code);
  }
  cfg.validate();
  return cfg;
}

json to_json(const RigidEstimate& est) {
  return {{"rotated_180", est.rotated_180}, {"dx", est.dx}, {"dy", est.dy}, {"score", est.score}};
}

RigidEstimate rigid_from_json(const json& j) {
  constexpr auto code = ErrorCode::InvalidConfig;
  check_keys(j, {"rotated_180", "dx", "dy", "score"}, code, "rigid estimate");
  RigidEstimate est;
  read_bool(j, "rotated_180", est.rotated_180, code);
  read_number(j, "dx", est.dx, code);
  read_number(j, "dy", est.dy, code);
  read_number(j, "score", est.score, code);
  return est;
}

json to_json(const SynthSpec& s) {
  return {{"seed", s.seed},
          {"width", s.width},
          {"height", s.height},
          {"shift", {s.shift_x, s.shift_y}},
          {"rotate_180", s.rotate_180},
          {"scale", s.scale},
          {"blur_sigma", s.blur_sigma},
          {"field_amplitude", s.field_amplitude},
          {"field_wavelength", s.field_wavelength},
          {"noise_sigma", s.noise_sigma},
          {"landmark_grid", s.landmark_grid},
          {"spacing_um", s.spacing_um}};
}

SynthSpec synth_spec_from_json(const json& j) {
  constexpr auto code = ErrorCode::InvalidSpec;
  check_keys(j,
             {"seed", "width", "height", "shift", "rotate_180", "scale", "blur_sigma", "field_amplitude",
              "field_wavelength", "noise_sigma", "landmark_grid", "spacing_um"},
             code, "synth spec");
  SynthSpec s;
  read_number(j, "seed", s.seed, code);
  read_number(j, "width", s.width, code);
  read_number(j, "height", s.height, code);
  if (j.contains("shift")) {
    const json& sh = j.at("shift");
    if (!sh.is_array() || sh.size() != 2 || !sh[0].is_number_integer() || !sh[1].is_number_integer()) {
      config_fail(code, "'shift' must be an array of two integers");
    }
    s.shift_x = sh[0].get<Index>();
    s.shift_y = sh[1].get<Index>();
  }
  read_bool(j, "rotate_180", s.rotate_180, code);
  read_number(j, "scale", s.scale, code);
  read_number(j, "blur_sigma", s.blur_sigma, code);
  read_number(j, "field_amplitude", s.field_amplitude, code);
  read_number(j, "field_wavelength", s.field_wavelength, code);
  read_number(j, "noise_sigma", s.noise_sigma, code);
  read_number(j, "landmark_grid", s.landmark_grid, code);
  read_number(j, "spacing_um", s.spacing_um, code);
  s.validate();
  return s;
}

json to_json(const CohortReport& cohort) {
  json images = json::array();
  for (const auto& e : cohort.eval.per_image) {
    images.push_back({{"pair_id", e.pair_id}, {"p90_um", e.p90_um}, {"distances_um", e.distances_um}});
  }
  json failures = json::array();
  for (const auto& f : cohort.failures) {
    failures.push_back({{"pair_id", f.pair_id}, {"stage", f.stage}, {"message", f.message}});
  }
  return {{"median_p90_um", cohort.eval.median_p90_um},
          {"images", images},
          {"failures", failures},
          {"failure_count", cohort.failures.size()}};
}

json to_json(const RegistrationReport& r) {
  json outputs = json::object();
  for (const auto& [name, path] : r.outputs) outputs[name] = path.string();
  json j = {{"inputs", {{"fixed", r.fixed_path.string()}, {"moving", r.moving_path.string()}}},
            {"config", to_json(r.config)},
            {"crop", {{"fixed", crop_json(r.fixed_crop)}, {"moving", crop_json(r.moving_crop)}}},
            {"working_size", {{"fixed", {r.fixed_width, r.fixed_height}}, {"moving", {r.moving_width, r.moving_height}}}},
            {"spacing_um", r.config.working_spacing_um()},
            {"rigid", to_json(r.rigid)},
            {"deform",
             {{"initial", terms_json(r.initial)},
              {"final", terms_json(r.final)},
              {"iterations", r.iterations},
              {"levels_used", r.levels_used}}},
            {"outputs", outputs},
            {"warnings", r.warnings},
            {"timings_ms", r.timings_ms}};
  if (r.landmarks) {
    j["landmarks"] = {{"p90_um", r.landmarks->p90_um}, {"distances_um", r.landmarks->distances_um}};
  }
  return j;
}

GrayImage checkerboard(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::ShapeMismatch, "checkerboard inputs differ in shape");
  }
  const Index tw = (a.width() + 7) / 8;
  const Index th = (a.height() + 7) / 8;
  GrayImage out = a;
  for (Index y = 0; y < a.height(); ++y) {
    for (Index x = 0; x < a.width(); ++x) {
      if ((x / tw + y / th) % 2 == 1) out.pixels(y, x) = b.pixels(y, x);
    }
  }
  return out;
}

PairRegistration run_registration(const fs::path& fixed_path, const fs::path& moving_path,
                                  const PipelineConfig& config, const RegisterOptions& options) {
  config.validate();
  PairRegistration out;
  RegistrationReport& report = out.report;
  report.fixed_path = fixed_path;
  report.moving_path = moving_path;
  report.config = config;
  StageClock clock(report.timings_ms);

  auto [fixed_full, moving_full] = clock.run("load", [&] {
    return std::pair{read_gray(fixed_path, config.spacing_um_at_full_res),
                     read_gray(moving_path, config.spacing_um_at_full_res)};
  });
  std::vector<LandmarkPair> landmarks;
  if (options.landmarks) {
    landmarks = clock.run("load", [&] { return parse_landmarks(read_text(*options.landmarks)); });
  }

  clock.run("preprocess", [&] {
    auto f = trim_black_border(downsample(fixed_full, config.downsample_factor), config.trim_threshold);
    auto m = trim_black_border(downsample(moving_full, config.downsample_factor), config.trim_threshold);
    out.fixed = std::move(f.image);
    out.moving = std::move(m.image);
    report.fixed_crop = f.rect;
    report.moving_crop = m.rect;
  });
  report.fixed_width = out.fixed.width();
  report.fixed_height = out.fixed.height();
  report.moving_width = out.moving.width();
  report.moving_height = out.moving.height();

  report.rigid = clock.run("rigid", [&] {
    if (options.rigid) return rigid_from_json(parse_json_file(*options.rigid, ErrorCode::InvalidConfig));
    return template_match(out.fixed, out.moving, config.match);
  });
  if (report.rigid.score < 0.2) {
    report.warnings.push_back("low rigid match score " + std::to_string(report.rigid.score));
  }
  out.moving_rigid = apply_rigid(out.moving, report.rigid, out.fixed.width(), out.fixed.height());

  out.deform = clock.run("deform", [&] { return optimize_deformation(out.fixed, out.moving_rigid, config.deform); });
  out.warped = warp(out.moving_rigid, out.deform.field);
  report.initial = out.deform.initial;
  report.final = out.deform.final;
  report.iterations = config.deform.iterations;
  report.levels_used = out.deform.levels_used;

  if (options.landmarks) {
    report.landmarks = clock.run("landmarks", [&] {
      // Annotations are in untrimmed working-scale coordinates.
      const Eigen::Vector2d fixed_off(double(report.fixed_crop.x0), double(report.fixed_crop.y0));
      const Eigen::Vector2d moving_off(double(report.moving_crop.x0), double(report.moving_crop.y0));
      std::vector<LandmarkPair> local = landmarks;
      for (auto& lp : local) {
        lp.fixed_xy -= fixed_off;
        lp.moving_xy -= moving_off;
      }
      return landmark_distances(moving_path.stem().string(), local, report.rigid, out.deform.field,
                                out.moving.width(), out.moving.height(), config.working_spacing_um());
    });
  }
  return out;
}

RegistrationReport cmd_register(const fs::path& fixed_path, const fs::path& moving_path,
                                const PipelineConfig& config, const fs::path& out_dir,
                                const RegisterOptions& options) {
  PairRegistration reg = run_registration(fixed_path, moving_path, config, options);
  RegistrationReport& report = reg.report;
  StageClock clock(report.timings_ms);
  auto remove_outputs = [&] {
    std::error_code ignored;
    for (const auto& [name, path] : report.outputs) fs::remove(path, ignored);
  };
  try {
    clock.run("write", [&] {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      if (ec) throw Error(ErrorCode::IoError, out_dir.string() + ": " + ec.message());
      report.outputs = {{"rigid", out_dir / "rigid.json"},       {"field", out_dir / "field.dfld"},
                        {"trace", out_dir / "trace.csv"},        {"warped", out_dir / "warped.png"},
                        {"checkerboard", out_dir / "checkerboard.png"}, {"report", out_dir / "report.json"}};
      write_text(report.outputs["rigid"], to_json(report.rigid).dump(2) + "\n");
      write_dfld(report.outputs["field"], reg.deform.field);
      write_text(report.outputs["trace"], format_trace_csv(reg.deform.trace));
      write_png(report.outputs["warped"], reg.warped);
      write_png(report.outputs["checkerboard"], checkerboard(reg.fixed, reg.warped));
    });
    write_text(report.outputs["report"], to_json(report).dump(2) + "\n");
  } catch (...) {
    remove_outputs();
    throw;
  }
  return report;
}

CohortReport cmd_evaluate(const fs::path& manifest_path, const fs::path& out_path, int workers,
                          const std::optional<PipelineConfig>& config_override) {
  const json manifest = parse_json_file(manifest_path, ErrorCode::InvalidConfig);
  check_keys(manifest, {"config", "landmarks_dir", "pairs"}, ErrorCode::InvalidConfig, "manifest");
  const fs::path base = manifest_path.parent_path();
  PipelineConfig config;
  if (config_override) {
    config = *config_override;
  } else if (manifest.contains("config")) {
    config = pipeline_config_from_json(manifest.at("config"));
  }
  const fs::path landmarks_base =
      manifest.contains("landmarks_dir") ? resolve(base, manifest.at("landmarks_dir").get<std::string>()) : base;

  struct Entry {
    std::string id;
    fs::path fixed, moving;
    std::optional<fs::path> landmarks;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  if (manifest.contains("pairs")) {
    if (!manifest.at("pairs").is_array()) config_fail(ErrorCode::InvalidConfig, "manifest 'pairs' must be an array");
    for (const auto& p : manifest.at("pairs")) {
      check_keys(p, {"id", "fixed", "moving", "landmarks"}, ErrorCode::InvalidConfig, "manifest pair");
      for (const char* key : {"id", "fixed", "moving"}) {
        if (!p.contains(key) || !p.at(key).is_string()) {
          config_fail(ErrorCode::InvalidConfig, std::string("manifest pair needs a string '") + key + "'");
        }
      }
      Entry e{p.at("id").get<std::string>(), resolve(base, p.at("fixed").get<std::string>()),
              resolve(base, p.at("moving").get<std::string>()), std::nullopt};
      if (e.id.empty() || e.id.find_first_of("/\\") != std::string::npos || e.id == "." || e.id == "..") {
        config_fail(ErrorCode::InvalidConfig, "pair id '" + e.id + "' is not usable as a directory name");
      }
      if (!seen.insert(e.id).second) config_fail(ErrorCode::InvalidConfig, "duplicate pair id '" + e.id + "'");
      if (p.contains("landmarks")) e.landmarks = resolve(landmarks_base, p.at("landmarks").get<std::string>());
      entries.push_back(std::move(e));
    }
  }
  if (entries.empty()) throw Error(ErrorCode::EmptyCohort, "manifest lists no pairs");

  const fs::path pairs_dir = out_path.parent_path() / (out_path.stem().string() + "_pairs");
  std::vector<std::optional<ImageEval>> evals(entries.size());
  std::vector<std::optional<FailedPair>> failures(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      const Entry& e = entries[i];
      try {
        if (!e.landmarks) throw StageError("landmarks", Error(ErrorCode::EmptyLandmarks, "pair has no landmark file"));
        RegisterOptions opts;
        opts.landmarks = e.landmarks;
        RegistrationReport r = cmd_register(e.fixed, e.moving, config, pairs_dir / e.id, opts);
        ImageEval eval = *r.landmarks;
        eval.pair_id = e.id;
        evals[i] = std::move(eval);
      } catch (const StageError& err) {
        failures[i] = FailedPair{e.id, err.stage(), err.what()};
      } catch (const std::exception& err) {
        failures[i] = FailedPair{e.id, "evaluate", err.what()};
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, entries.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  CohortReport cohort;
  std::vector<ImageEval> ok;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (evals[i]) ok.push_back(std::move(*evals[i]));
    if (failures[i]) cohort.failures.push_back(std::move(*failures[i]));
  }
  std::sort(cohort.failures.begin(), cohort.failures.end(),
            [](const FailedPair& a, const FailedPair& b) { return a.pair_id < b.pair_id; });
  if (ok.empty()) throw Error(ErrorCode::EmptyCohort, "every pair in the manifest failed");
  cohort.eval = median_p90(std::move(ok));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text(out_path, to_json(cohort).dump(2) + "\n");
  return cohort;
}

std::vector<fs::path> cmd_synth(const fs::path& spec_path, const fs::path& out_dir) {
  const SynthSpec spec = synth_spec_from_json(parse_json_file(spec_path, ErrorCode::InvalidSpec));
  const SynthPair pair = make_pair(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written{out_dir / "fixed.png", out_dir / "moving.png", out_dir / "landmarks.csv",
                                out_dir / "true_field.dfld", out_dir / "synth.json"};
  write_png(written[0], pair.fixed);
  write_png(written[1], pair.moving);
  write_text(written[2], format_landmarks(pair.landmarks));
  write_dfld(written[3], pair.true_field);
  write_text(written[4], json{{"spec", to_json(spec)}, {"true_rigid", to_json(pair.true_rigid)}}.dump(2) + "\n");
  return written;
}

}  // namespace wsireg
