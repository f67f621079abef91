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

#ifndef WSIREG_RASTER_HPP_
#define WSIREG_RASTER_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "wsireg/error.hpp"

namespace wsireg {

using Index = Eigen::Index;

/// Row-major scalar plane; element (y, x) addresses row y, column x.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel raster with intensities in [0, 1] and a physical pixel size.
template <typename Scalar>
struct BasicGrayImage {
  Plane<Scalar> pixels;
  double spacing_um = 1.0;

  BasicGrayImage() = default;
  BasicGrayImage(Plane<Scalar> p, double spacing) : pixels(std::move(p)), spacing_um(spacing) {}
  BasicGrayImage(Index width, Index height, double spacing, Scalar fill = Scalar(0))
      : pixels(Plane<Scalar>::Constant(height, width, fill)), spacing_um(spacing) {}

  Index width() const { return pixels.cols(); }
  Index height() const { return pixels.rows(); }
  Index size() const { return pixels.size(); }

  Scalar operator()(Index x, Index y) const { return pixels(y, x); }
  Scalar& operator()(Index x, Index y) { return pixels(y, x); }

  bool operator==(const BasicGrayImage& other) const {
    return spacing_um == other.spacing_um && pixels.rows() == other.pixels.rows() &&
           pixels.cols() == other.pixels.cols() && (pixels == other.pixels).all();
  }
};

using GrayImage = BasicGrayImage<double>;

/// Three-plane color raster, channels in [0, 1].
template <typename Scalar>
struct BasicRgbImage {
  Plane<Scalar> r, g, b;

  BasicRgbImage() = default;
  BasicRgbImage(Index width, Index height)
      : r(Plane<Scalar>::Zero(height, width)),
        g(Plane<Scalar>::Zero(height, width)),
        b(Plane<Scalar>::Zero(height, width)) {}

  Index width() const { return r.cols(); }
  Index height() const { return r.rows(); }
};

using RgbImage = BasicRgbImage<double>;

/// Retained region of a trimmed image, in source pixel coordinates.
struct CropRect {
  Index x0 = 0;
  Index y0 = 0;
  Index width = 0;
  Index height = 0;

  bool operator==(const CropRect&) const = default;
};

template <typename Scalar>
struct TrimResult {
  BasicGrayImage<Scalar> image;
  CropRect rect;
};

// Rec. 601 luma.
template <typename Scalar>
BasicGrayImage<Scalar> to_grayscale(const BasicRgbImage<Scalar>& img, double spacing_um) {
  Plane<Scalar> y = Scalar(0.299) * img.r + Scalar(0.587) * img.g + Scalar(0.114) * img.b;
  return {y.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)), spacing_um};
}

/// Removes dark rows and columns from each side. A row (column) counts as
/// black when its mean intensity is <= threshold; column means are taken over
/// the rows that survive the row scan.
template <typename Scalar>
TrimResult<Scalar> trim_black_border(const BasicGrayImage<Scalar>& img, Scalar threshold) {
  const Index h = img.height();
  const Index w = img.width();
  auto row_black = [&](Index y) { return img.pixels.row(y).mean() <= threshold; };

  Index top = 0;
  while (top < h && row_black(top)) ++top;
  if (top == h) throw Error(ErrorCode::AllBlack, "every row is at or below the black threshold");
  Index bottom = h - 1;
  while (bottom > top && row_black(bottom)) --bottom;
  const Index rows = bottom - top + 1;

  auto col_black = [&](Index x) { return img.pixels.col(x).segment(top, rows).mean() <= threshold; };
  Index left = 0;
  while (left < w && col_black(left)) ++left;
  if (left == w) throw Error(ErrorCode::AllBlack, "every column is at or below the black threshold");
  Index right = w - 1;
  while (right > left && col_black(right)) --right;
  const Index cols = right - left + 1;

  CropRect rect{left, top, cols, rows};
  Plane<Scalar> cropped = img.pixels.block(top, left, rows, cols);
  return {BasicGrayImage<Scalar>(std::move(cropped), img.spacing_um), rect};
}

/// Box-filter reduction; partial edge blocks average their in-bounds pixels.
template <typename Scalar>
BasicGrayImage<Scalar> downsample(const BasicGrayImage<Scalar>& img, Index factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidConfig, "downsample factor must be >= 1");
  if (factor == 1) return img;
  const Index w = img.width();
  const Index h = img.height();
  const Index ow = (w + factor - 1) / factor;
  const Index oh = (h + factor - 1) / factor;
  Plane<Scalar> out(oh, ow);
  for (Index oy = 0; oy < oh; ++oy) {
    const Index y0 = oy * factor;
    const Index bh = std::min(factor, h - y0);
    for (Index ox = 0; ox < ow; ++ox) {
      const Index x0 = ox * factor;
      const Index bw = std::min(factor, w - x0);
      out(oy, ox) = img.pixels.block(y0, x0, bh, bw).sum() / Scalar(bh * bw);
    }
  }
  return {std::move(out), img.spacing_um * static_cast<double>(factor)};
}

template <typename Scalar>
BasicGrayImage<Scalar> rotate180(const BasicGrayImage<Scalar>& img) {
  Plane<Scalar> out = img.pixels.reverse();
  return {std::move(out), img.spacing_um};
}

/// Normalized 1D Gaussian taps of radius ceil(3 sigma), centre at index radius.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> gaussian_kernel(Scalar sigma) {
  if (!(sigma > Scalar(0))) throw Error(ErrorCode::InvalidConfig, "blur sigma must be positive");
  const Index radius = static_cast<Index>(std::ceil(Scalar(3) * sigma));
  Eigen::Array<Scalar, Eigen::Dynamic, 1> k(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) {
    k(i + radius) = std::exp(-Scalar(i * i) / (Scalar(2) * sigma * sigma));
  }
  return k / k.sum();
}

/// Separable Gaussian blur with clamp-to-edge borders.
template <typename Scalar>
BasicGrayImage<Scalar> gaussian_blur(const BasicGrayImage<Scalar>& img, Scalar sigma) {
  const auto k = gaussian_kernel(sigma);
  const Index radius = (k.size() - 1) / 2;
  const Index w = img.width();
  const Index h = img.height();

  Plane<Scalar> tmp(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Scalar acc = 0;
      for (Index i = -radius; i <= radius; ++i) {
        acc += k(i + radius) * img.pixels(y, std::clamp<Index>(x + i, 0, w - 1));
      }
      tmp(y, x) = acc;
    }
  }
  Plane<Scalar> out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Scalar acc = 0;
      for (Index i = -radius; i <= radius; ++i) {
        acc += k(i + radius) * tmp(std::clamp<Index>(y + i, 0, h - 1), x);
      }
      out(y, x) = acc;
    }
  }
  // Rounding can push a convex combination an ulp past the input range.
  out = out.cwiseMax(img.pixels.minCoeff()).cwiseMin(img.pixels.maxCoeff());
  return {std::move(out), img.spacing_um};
}

/// Bilinear value and its partial derivatives with respect to the sample
/// position. Derivatives are zero along an axis whose coordinate was clamped.
template <typename Scalar>
struct BilinearSample {
  Scalar value;
  Scalar d_dx;
  Scalar d_dy;
};

namespace detail {

template <typename Scalar>
struct AxisCell {
  Index i0;
  Index i1;
  Scalar frac;
  bool clamped;
};

template <typename Scalar>
AxisCell<Scalar> axis_cell(Scalar c, Index n) {
  const Scalar hi = Scalar(n - 1);
  if (!(c >= Scalar(0))) return {0, 0, Scalar(0), true};
  if (c >= hi) return {n - 1, n - 1, Scalar(0), c > hi};
  const Index i0 = static_cast<Index>(std::floor(c));
  return {i0, i0 + 1, c - Scalar(i0), false};
}

}  // namespace detail

template <typename Derived>
BilinearSample<typename Derived::Scalar> bilinear_sample_with_gradient(
    const Eigen::ArrayBase<Derived>& plane, typename Derived::Scalar x, typename Derived::Scalar y) {
  using Scalar = typename Derived::Scalar;
  const auto cx = detail::axis_cell(x, plane.cols());
  const auto cy = detail::axis_cell(y, plane.rows());
  const Scalar p00 = plane(cy.i0, cx.i0);
  const Scalar p10 = plane(cy.i0, cx.i1);
  const Scalar p01 = plane(cy.i1, cx.i0);
  const Scalar p11 = plane(cy.i1, cx.i1);
  const Scalar top = p00 + cx.frac * (p10 - p00);
  const Scalar bot = p01 + cx.frac * (p11 - p01);
  BilinearSample<Scalar> s;
  s.value = top + cy.frac * (bot - top);
  // Inside a cell the partials are the opposite-axis interpolated differences.
  // On the last row/column (i1 == i0) they vanish, matching the clamp.
  s.d_dx = cx.clamped ? Scalar(0) : (p10 - p00) + cy.frac * ((p11 - p01) - (p10 - p00));
  s.d_dy = cy.clamped ? Scalar(0) : (bot - top);
  return s;
}

/// Bilinear interpolation among pixel centres; out-of-range coordinates clamp
/// to the border.
template <typename Derived>
typename Derived::Scalar bilinear_sample(const Eigen::ArrayBase<Derived>& plane,
                                         typename Derived::Scalar x,
                                         typename Derived::Scalar y) {
  using Scalar = typename Derived::Scalar;
  const auto cx = detail::axis_cell(x, plane.cols());
  const auto cy = detail::axis_cell(y, plane.rows());
  const Scalar p00 = plane(cy.i0, cx.i0);
  const Scalar p10 = plane(cy.i0, cx.i1);
  const Scalar p01 = plane(cy.i1, cx.i0);
  const Scalar p11 = plane(cy.i1, cx.i1);
  const Scalar top = p00 + cx.frac * (p10 - p00);
  const Scalar bot = p01 + cx.frac * (p11 - p01);
  return top + cy.frac * (bot - top);
}

template <typename Scalar>
Scalar bilinear_sample(const BasicGrayImage<Scalar>& img, Scalar x, Scalar y) {
  return bilinear_sample(img.pixels, x, y);
}

}  // namespace wsireg

#endif  // WSIREG_RASTER_HPP_
