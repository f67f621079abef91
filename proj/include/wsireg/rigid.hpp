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

#ifndef WSIREG_RIGID_HPP_
#define WSIREG_RIGID_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "wsireg/error.hpp"
#include "wsireg/raster.hpp"

namespace wsireg {

/// Result of the rigid step: the moving image (rotated by 180 degrees when
/// rotated_180 is set) placed with its origin at (dx, dy) on the fixed grid.
/// Moving pixel (i, j) of the oriented image lands on fixed pixel (i+dx, j+dy).
struct RigidEstimate {
  bool rotated_180 = false;
  Index dx = 0;
  Index dy = 0;
  double score = 0.0;

  bool operator==(const RigidEstimate&) const = default;
};

struct MatchConfig {
  Index stride = 4;
  Index refine_radius = 8;
  double min_overlap_frac = 0.25;

  void validate() const {
    if (stride < 1) throw Error(ErrorCode::InvalidConfig, "match.stride must be >= 1");
    if (refine_radius < 0) throw Error(ErrorCode::InvalidConfig, "match.refine_radius must be >= 0");
    if (!(min_overlap_frac > 0.0 && min_overlap_frac <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "match.min_overlap_frac must lie in (0, 1]");
    }
  }
};

namespace detail {

// Two-pass zero-normalized cross-correlation over n paired samples produced
// by get(i) -> std::pair. The summation order is the sample order, so any two
// callers that visit the same samples in the same order get identical bits.
template <typename Scalar, typename Get>
Scalar ncc_visit(Index n, Get get) {
  Scalar sa = 0, sb = 0;
  Scalar amin = get(0).first, amax = amin;
  Scalar bmin = get(0).second, bmax = bmin;
  for (Index i = 0; i < n; ++i) {
    const auto [a, b] = get(i);
    sa += a;
    sb += b;
    amin = std::min(amin, a);
    amax = std::max(amax, a);
    bmin = std::min(bmin, b);
    bmax = std::max(bmax, b);
  }
  if (amin == amax || bmin == bmax) throw Error(ErrorCode::ZeroVariance, "constant input to NCC");
  const Scalar ma = sa / Scalar(n);
  const Scalar mb = sb / Scalar(n);
  Scalar sab = 0, saa = 0, sbb = 0;
  for (Index i = 0; i < n; ++i) {
    const auto [a, b] = get(i);
    const Scalar da = a - ma;
    const Scalar db = b - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > Scalar(0)) || !(sbb > Scalar(0))) {
    throw Error(ErrorCode::ZeroVariance, "constant input to NCC");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), Scalar(-1), Scalar(1));
}

struct Overlap {
  Index x0, y0, width, height;  // in fixed coordinates
  Index count() const { return width * height; }
};

inline Overlap overlap_of(Index fixed_w, Index fixed_h, Index templ_w, Index templ_h, Index dx, Index dy) {
  const Index x0 = std::max<Index>(0, dx);
  const Index y0 = std::max<Index>(0, dy);
  const Index x1 = std::min(fixed_w, dx + templ_w);
  const Index y1 = std::min(fixed_h, dy + templ_h);
  return {x0, y0, std::max<Index>(0, x1 - x0), std::max<Index>(0, y1 - y0)};
}

inline bool overlap_sufficient(const Overlap& o, Index templ_w, Index templ_h, double min_overlap_frac) {
  return o.count() > 0 &&
         static_cast<double>(o.count()) >= min_overlap_frac * static_cast<double>(templ_w * templ_h);
}

}  // namespace detail

/// Zero-normalized cross-correlation of two equal-length sample vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar ncc(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "NCC inputs differ in length");
  if (a.size() < 2) throw Error(ErrorCode::ZeroVariance, "NCC needs at least two samples");
  return detail::ncc_visit<Scalar>(a.size(), [&](Index i) { return std::pair<Scalar, Scalar>(a(i), b(i)); });
}

/// NCC between the fixed image and the template placed at (dx, dy), taken over
/// their overlap only. Samples are visited row-major over the overlap.
template <typename Scalar>
Scalar ncc_at(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& templ, Index dx, Index dy,
              double min_overlap_frac) {
  const auto o = detail::overlap_of(fixed.width(), fixed.height(), templ.width(), templ.height(), dx, dy);
  if (!detail::overlap_sufficient(o, templ.width(), templ.height(), min_overlap_frac)) {
    throw Error(ErrorCode::InsufficientOverlap,
                "offset (" + std::to_string(dx) + ", " + std::to_string(dy) + ") overlaps too little");
  }
  if (o.count() < 2) throw Error(ErrorCode::ZeroVariance, "single-pixel overlap");
  const auto& f = fixed.pixels;
  const auto& t = templ.pixels;
  return detail::ncc_visit<Scalar>(o.count(), [&](Index i) {
    const Index y = o.y0 + i / o.width;
    const Index x = o.x0 + i % o.width;
    return std::pair<Scalar, Scalar>(f(y, x), t(y - dy, x - dx));
  });
}

/// Deterministic total order on candidate placements: higher score, then the
/// un-rotated orientation, then smaller |dx| + |dy|, then lexicographic (dx, dy).
inline bool ranks_before(const RigidEstimate& a, const RigidEstimate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.rotated_180 != b.rotated_180) return !a.rotated_180;
  const Index la = std::abs(a.dx) + std::abs(a.dy);
  const Index lb = std::abs(b.dx) + std::abs(b.dy);
  if (la != lb) return la < lb;
  if (a.dx != b.dx) return a.dx < b.dx;
  return a.dy < b.dy;
}

namespace detail {

template <typename Scalar>
std::optional<RigidEstimate> score_placement(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& templ,
                                             bool rotated, Index dx, Index dy, double min_overlap_frac) {
  const auto o = overlap_of(fixed.width(), fixed.height(), templ.width(), templ.height(), dx, dy);
  if (!overlap_sufficient(o, templ.width(), templ.height(), min_overlap_frac) || o.count() < 2) {
    return std::nullopt;
  }
  try {
    return RigidEstimate{rotated, dx, dy, static_cast<double>(ncc_at(fixed, templ, dx, dy, min_overlap_frac))};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ZeroVariance) return std::nullopt;
    throw;
  }
}

// Smallest multiple of step that is >= v.
inline Index ceil_to_multiple(Index v, Index step) {
  const Index q = v / step;
  return (q * step < v ? q + 1 : q) * step;
}

}  // namespace detail

/// Step 1: exhaustive NCC template matching of the moving image, and of its
/// 180-degree rotation, over every placement with enough overlap.
///
/// The coarse pass visits offsets that are multiples of cfg.stride; the best
/// few coarse hits of each orientation are then refined at stride 1 within
/// cfg.refine_radius. With stride 1 the coarse pass is already exhaustive.
template <typename Scalar>
RigidEstimate template_match(const BasicGrayImage<Scalar>& fixed, const BasicGrayImage<Scalar>& moving,
                             const MatchConfig& cfg) {
  cfg.validate();
  constexpr std::size_t kRefineSeeds = 3;
  std::optional<RigidEstimate> best;
  auto consider = [&](const std::optional<RigidEstimate>& c) {
    if (c && (!best || ranks_before(*c, *best))) best = c;
  };

  for (bool rotated : {false, true}) {
    const BasicGrayImage<Scalar> templ = rotated ? rotate180(moving) : moving;
    const Index dx_lo = -(templ.width() - 1), dx_hi = fixed.width() - 1;
    const Index dy_lo = -(templ.height() - 1), dy_hi = fixed.height() - 1;

    std::vector<RigidEstimate> coarse;
    const Index sx0 = detail::ceil_to_multiple(dx_lo, cfg.stride);
    const Index sy0 = detail::ceil_to_multiple(dy_lo, cfg.stride);
    for (Index dy = sy0; dy <= dy_hi; dy += cfg.stride) {
      for (Index dx = sx0; dx <= dx_hi; dx += cfg.stride) {
        if (auto c = detail::score_placement(fixed, templ, rotated, dx, dy, cfg.min_overlap_frac)) {
          coarse.push_back(*c);
        }
      }
    }
    if (coarse.empty()) continue;
    const std::size_t seeds = std::min(kRefineSeeds, coarse.size());
    std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(seeds), coarse.end(),
                      ranks_before);
    consider(coarse.front());
    if (cfg.stride == 1) continue;

    for (std::size_t s = 0; s < seeds; ++s) {
      const RigidEstimate seed = coarse[s];
      for (Index dy = std::max(dy_lo, seed.dy - cfg.refine_radius);
           dy <= std::min(dy_hi, seed.dy + cfg.refine_radius); ++dy) {
        for (Index dx = std::max(dx_lo, seed.dx - cfg.refine_radius);
             dx <= std::min(dx_hi, seed.dx + cfg.refine_radius); ++dx) {
          consider(detail::score_placement(fixed, templ, rotated, dx, dy, cfg.min_overlap_frac));
        }
      }
    }
  }
  if (!best) throw Error(ErrorCode::NoValidPlacement, "no placement satisfies the overlap constraint");
  return *best;
}

/// Resamples the moving image onto a width x height fixed grid: orientation
/// first, then translation. Uncovered pixels take the clamped border value.
template <typename Scalar>
BasicGrayImage<Scalar> apply_rigid(const BasicGrayImage<Scalar>& moving, const RigidEstimate& est, Index out_width,
                                   Index out_height) {
  const BasicGrayImage<Scalar> src = est.rotated_180 ? rotate180(moving) : moving;
  Plane<Scalar> out(out_height, out_width);
  for (Index y = 0; y < out_height; ++y) {
    const Index sy = std::clamp<Index>(y - est.dy, 0, src.height() - 1);
    for (Index x = 0; x < out_width; ++x) {
      out(y, x) = src.pixels(sy, std::clamp<Index>(x - est.dx, 0, src.width() - 1));
    }
  }
  return {std::move(out), moving.spacing_um};
}

}  // namespace wsireg

#endif  // WSIREG_RIGID_HPP_
