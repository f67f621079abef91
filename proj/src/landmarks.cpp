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

#include "wsireg/landmarks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

namespace wsireg {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::ParseError, "landmark row " + std::to_string(line_no) + ": " + what);
}

double parse_coord(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    parse_fail(line_no, "'" + std::string(field) + "' is not a finite number");
  }
  return value;
}

}  // namespace

std::vector<LandmarkPair> parse_landmarks(std::string_view csv_text) {
  std::vector<LandmarkPair> pairs;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= csv_text.size()) {
    const auto nl = csv_text.find('\n', start);
    const auto line = trim(csv_text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    ++line_no;
    start = nl == std::string_view::npos ? csv_text.size() + 1 : nl + 1;
    if (line.empty()) continue;

    const auto fields = split(line, ',');
    if (!have_header) {
      const std::vector<std::string_view> expected{"id", "fixed_x", "fixed_y", "moving_x", "moving_y"};
      if (fields != expected) parse_fail(line_no, "expected header id,fixed_x,fixed_y,moving_x,moving_y");
      have_header = true;
      continue;
    }
    if (fields.size() != 5) parse_fail(line_no, "expected 5 fields, found " + std::to_string(fields.size()));
    LandmarkPair p;
    p.id = std::string(fields[0]);
    p.fixed_xy = {parse_coord(fields[1], line_no), parse_coord(fields[2], line_no)};
    p.moving_xy = {parse_coord(fields[3], line_no), parse_coord(fields[4], line_no)};
    pairs.push_back(std::move(p));
  }
  if (!have_header) throw Error(ErrorCode::ParseError, "landmark CSV has no header row");
  return pairs;
}

std::string format_landmarks(const std::vector<LandmarkPair>& pairs) {
  std::string out = "id,fixed_x,fixed_y,moving_x,moving_y\n";
  char buf[64];
  auto put = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
  };
  for (const auto& p : pairs) {
    out += p.id;
    for (double v : {p.fixed_xy.x(), p.fixed_xy.y(), p.moving_xy.x(), p.moving_xy.y()}) {
      out += ',';
      put(v);
    }
    out += '\n';
  }
  return out;
}

Eigen::Vector2d map_fixed_to_moving(const Eigen::Vector2d& p, const RigidEstimate& est,
                                    const DisplacementField& field, Index moving_width, Index moving_height) {
  if (field.width() < 1 || field.height() < 1) throw Error(ErrorCode::ShapeMismatch, "empty displacement field");
  Eigen::Vector2d q(p.x() + bilinear_sample(field.u, p.x(), p.y()), p.y() + bilinear_sample(field.v, p.x(), p.y()));
  q -= Eigen::Vector2d(double(est.dx), double(est.dy));
  if (est.rotated_180) q = Eigen::Vector2d(double(moving_width - 1), double(moving_height - 1)) - q;
  return q;
}

ImageEval landmark_distances(std::string pair_id, const std::vector<LandmarkPair>& pairs, const RigidEstimate& est,
                             const DisplacementField& field, Index moving_width, Index moving_height,
                             double spacing_um) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyLandmarks, "no landmarks for pair '" + pair_id + "'");
  ImageEval eval;
  eval.pair_id = std::move(pair_id);
  eval.distances_um.reserve(pairs.size());
  for (const auto& lp : pairs) {
    const auto& f = lp.fixed_xy;
    if (!(f.x() >= 0.0 && f.y() >= 0.0 && f.x() <= double(field.width() - 1) && f.y() <= double(field.height() - 1))) {
      throw Error(ErrorCode::OutOfGrid, "landmark '" + lp.id + "' lies outside the fixed grid");
    }
    const Eigen::Vector2d q = map_fixed_to_moving(f, est, field, moving_width, moving_height);
    eval.distances_um.push_back(spacing_um * (q - lp.moving_xy).norm());
  }
  eval.p90_um = percentile_90(eval.distances_um);
  return eval;
}

double percentile_90(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double rank = 0.9 * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  if (lo + 1 >= values.size()) return values[lo];
  return values[lo] + (rank - double(lo)) * (values[lo + 1] - values[lo]);
}

CohortEval median_p90(std::vector<ImageEval> per_image) {
  if (per_image.empty()) throw Error(ErrorCode::EmptyInput, "median over an empty cohort");
  std::sort(per_image.begin(), per_image.end(),
            [](const ImageEval& a, const ImageEval& b) { return a.pair_id < b.pair_id; });
  std::vector<double> p90s;
  p90s.reserve(per_image.size());
  for (const auto& e : per_image) p90s.push_back(e.p90_um);
  std::sort(p90s.begin(), p90s.end());
  const std::size_t n = p90s.size();
  CohortEval cohort;
  cohort.median_p90_um = n % 2 == 1 ? p90s[n / 2] : (p90s[n / 2 - 1] + p90s[n / 2]) / 2.0;
  cohort.per_image = std::move(per_image);
  return cohort;
}

}  // namespace wsireg
