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

#include "wsireg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wsireg {

double SplitMix64::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthSpec::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidSpec, what); };
  if (width < 16 || height < 16) fail("width and height must be >= 16");
  if (!(scale > 0.0) || !std::isfinite(scale)) fail("scale must be positive");
  if (!(blur_sigma >= 0.0)) fail("blur_sigma must be >= 0");
  if (!(field_amplitude >= 0.0) || !std::isfinite(field_amplitude)) fail("field_amplitude must be >= 0");
  if (!(field_wavelength > 0.0) || !std::isfinite(field_wavelength)) fail("field_wavelength must be positive");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (std::abs(shift_x) >= width || std::abs(shift_y) >= height) fail("shift must be smaller than the image");
  if (landmark_grid < 1) fail("landmark_grid must be >= 1");
  if (!(spacing_um > 0.0)) fail("spacing_um must be positive");
}

GrayImage make_texture(Index width, Index height, std::uint64_t seed, double spacing_um) {
  SplitMix64 rng(seed);
  constexpr int kWaves = 6;
  Plane<double> tex = Plane<double>::Zero(height, width);
  double amp_sum = 0.0;
  for (int k = 0; k < kWaves; ++k) {
    const double period = rng.uniform(10.0, 40.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.5, 1.0);
    const double kx = 2.0 * std::numbers::pi * std::cos(angle) / period;
    const double ky = 2.0 * std::numbers::pi * std::sin(angle) / period;
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) tex(y, x) += amp * std::sin(kx * double(x) + ky * double(y) + phase);
    }
    amp_sum += amp;
  }
  tex /= amp_sum;

  GrayImage noise(width, height, spacing_um);
  for (Index i = 0; i < noise.size(); ++i) noise.pixels.data()[i] = rng.uniform();
  noise = gaussian_blur(noise, 1.5);
  Plane<double> n = noise.pixels - noise.pixels.mean();
  const double sd = std::sqrt(n.square().mean());
  if (sd > 0.0) n /= sd;
  tex += 0.25 * n;

  const double lo = tex.minCoeff();
  const double hi = tex.maxCoeff();
  tex = 0.05 + 0.9 * (tex - lo) / (hi - lo);
  return {std::move(tex), spacing_um};
}

DisplacementField make_smooth_field(Index width, Index height, double amplitude, double wavelength,
                                    std::uint64_t seed) {
  auto field = DisplacementField::Zero(width, height);
  if (amplitude == 0.0 || width < 3 || height < 3) return field;
  SplitMix64 rng(seed);
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double kx = 2.0 * std::numbers::pi * std::cos(dir) / wavelength;
  const double ky = 2.0 * std::numbers::pi * std::sin(dir) / wavelength;
  for (Index y = 1; y + 1 < height; ++y) {
    const double wy = std::sin(std::numbers::pi * double(y) / double(height - 1));
    for (Index x = 1; x + 1 < width; ++x) {
      const double wx = std::sin(std::numbers::pi * double(x) / double(width - 1));
      const double theta = kx * double(x) + ky * double(y) + phase;
      const double mag = amplitude * std::clamp(wx * wy, 0.0, 1.0);
      field.u(y, x) = mag * std::cos(theta);
      field.v(y, x) = mag * std::sin(theta);
    }
  }
  return field;
}

SynthPair make_pair(const SynthSpec& spec) {
  spec.validate();
  const Index w = spec.width;
  const Index h = spec.height;
  SplitMix64 seeds(spec.seed);
  const std::uint64_t texture_seed = seeds.next();
  const std::uint64_t field_seed = seeds.next();
  const std::uint64_t noise_seed = seeds.next();

  // The fixed image is the centre of a larger canvas so that the moving image
  // shows real texture wherever the transform reaches outside the fixed frame.
  const double scale_reach = std::abs(spec.scale - 1.0) * double(std::max(w, h)) / std::min(spec.scale, 1.0);
  const Index margin = std::max(std::abs(spec.shift_x), std::abs(spec.shift_y)) +
                       static_cast<Index>(std::ceil(spec.field_amplitude + scale_reach)) + 4;
  const GrayImage canvas = make_texture(w + 2 * margin, h + 2 * margin, texture_seed, spec.spacing_um);

  SynthPair pair;
  pair.fixed = GrayImage(canvas.pixels.block(margin, margin, h, w), spec.spacing_um);
  pair.true_rigid = {spec.rotate_180, spec.shift_x, spec.shift_y, 1.0};

  const DisplacementField smooth = make_smooth_field(w, h, spec.field_amplitude, spec.field_wavelength, field_seed);
  const bool scaled = spec.scale != 1.0;
  const Eigen::Vector2d centre(double(w - 1) / 2.0, double(h - 1) / 2.0);

  // Total pull map T(p) = S(p + u(p)), S scaling about the centre.
  pair.true_field = smooth;
  if (scaled) {
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const Eigen::Vector2d p{double(x), double(y)};
        const Eigen::Vector2d q = p + Eigen::Vector2d(smooth.u(y, x), smooth.v(y, x));
        const Eigen::Vector2d t = centre + spec.scale * (q - centre) - p;
        pair.true_field.u(y, x) = t.x();
        pair.true_field.v(y, x) = t.y();
      }
    }
  }

  // moving(m) = fixed(p) where T(p) - shift = R(m); solve p + u(p) = S^-1(R(m) + shift)
  // by fixed-point iteration (the smooth field is a contraction for |grad u| < 1).
  Plane<double> moving(h, w);
  for (Index my = 0; my < h; ++my) {
    for (Index mx = 0; mx < w; ++mx) {
      Eigen::Vector2d target{double(mx), double(my)};
      if (spec.rotate_180) target = Eigen::Vector2d(double(w - 1), double(h - 1)) - target;
      target += Eigen::Vector2d(double(spec.shift_x), double(spec.shift_y));
      if (scaled) target = centre + (target - centre) / spec.scale;
      Eigen::Vector2d p = target;
      if (spec.field_amplitude > 0.0) {
        for (int it = 0; it < 100; ++it) {
          const Eigen::Vector2d next =
              target - Eigen::Vector2d(bilinear_sample(smooth.u, p.x(), p.y()), bilinear_sample(smooth.v, p.x(), p.y()));
          const double change = (next - p).norm();
          p = next;
          if (change < 1e-12) break;
        }
      }
      moving(my, mx) = bilinear_sample(canvas.pixels, p.x() + double(margin), p.y() + double(margin));
    }
  }
  pair.moving = GrayImage(std::move(moving), spec.spacing_um);
  if (spec.blur_sigma > 0.0) pair.moving = gaussian_blur(pair.moving, spec.blur_sigma);
  if (spec.noise_sigma > 0.0) {
    SplitMix64 noise(noise_seed);
    for (Index i = 0; i < pair.moving.size(); ++i) {
      double& px = pair.moving.pixels.data()[i];
      px = std::clamp(px + spec.noise_sigma * noise.normal(), 0.0, 1.0);
    }
  }

  const Index g = spec.landmark_grid;
  for (Index j = 0; j < g; ++j) {
    for (Index i = 0; i < g; ++i) {
      const double fx = g == 1 ? 0.5 : 0.2 + 0.6 * double(i) / double(g - 1);
      const double fy = g == 1 ? 0.5 : 0.2 + 0.6 * double(j) / double(g - 1);
      LandmarkPair lp;
      lp.id = "L" + std::to_string(j * g + i);
      lp.fixed_xy = {fx * double(w - 1), fy * double(h - 1)};
      lp.moving_xy = map_fixed_to_moving(lp.fixed_xy, pair.true_rigid, pair.true_field, w, h);
      pair.landmarks.push_back(std::move(lp));
    }
  }
  return pair;
}

}  // namespace wsireg
