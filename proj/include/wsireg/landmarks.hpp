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

#ifndef WSIREG_LANDMARKS_HPP_
#define WSIREG_LANDMARKS_HPP_

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

#include "wsireg/deform.hpp"
#include "wsireg/rigid.hpp"

namespace wsireg {

/// Corresponding points at working scale, in fixed and moving pixel coordinates.
struct LandmarkPair {
  std::string id;
  Eigen::Vector2d fixed_xy = Eigen::Vector2d::Zero();
  Eigen::Vector2d moving_xy = Eigen::Vector2d::Zero();
};

struct ImageEval {
  std::string pair_id;
  std::vector<double> distances_um;
  double p90_um = 0.0;
};

struct CohortEval {
  std::vector<ImageEval> per_image;  // sorted by pair_id
  double median_p90_um = 0.0;
};

/// Parses `id,fixed_x,fixed_y,moving_x,moving_y` CSV. Blank lines are skipped;
/// errors name the 1-based line number.
std::vector<LandmarkPair> parse_landmarks(std::string_view csv_text);
std::string format_landmarks(const std::vector<LandmarkPair>& pairs);

/// Predicted location, in original moving-image coordinates, of fixed point p.
/// Follows the resampling chain backwards: add the interpolated displacement,
/// undo the translation, then apply the 180-degree index map of the moving
/// image when the estimate is rotated.
Eigen::Vector2d map_fixed_to_moving(const Eigen::Vector2d& p, const RigidEstimate& est,
                                    const DisplacementField& field, Index moving_width, Index moving_height);

/// Per-landmark distances in micrometers between the mapped fixed points and
/// the annotated moving points.
ImageEval landmark_distances(std::string pair_id, const std::vector<LandmarkPair>& pairs, const RigidEstimate& est,
                             const DisplacementField& field, Index moving_width, Index moving_height,
                             double spacing_um);

/// Linear-interpolation 90th percentile: rank 0.9 (n - 1) into the sorted values.
double percentile_90(std::vector<double> values);

/// Median of the per-image p90 values; an even count averages the central pair.
CohortEval median_p90(std::vector<ImageEval> per_image);

}  // namespace wsireg

#endif  // WSIREG_LANDMARKS_HPP_
