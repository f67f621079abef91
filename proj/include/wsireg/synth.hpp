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

#ifndef WSIREG_SYNTH_HPP_
#define WSIREG_SYNTH_HPP_

#include <cstdint>
#include <vector>

#include "wsireg/deform.hpp"
#include "wsireg/landmarks.hpp"
#include "wsireg/raster.hpp"
#include "wsireg/rigid.hpp"

namespace wsireg {

/// SplitMix64 (Steele, Lea, Flood 2014): golden-gamma increment
/// 0x9E3779B97F4A7C15 followed by the 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB
/// finalizer. Integer-only, so streams are identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

 private:
  std::uint64_t state_;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  Index width = 128;
  Index height = 128;
  Index shift_x = 0;
  Index shift_y = 0;
  bool rotate_180 = false;
  double scale = 1.0;
  double blur_sigma = 0.0;
  double field_amplitude = 0.0;
  double field_wavelength = 32.0;
  double noise_sigma = 0.0;
  Index landmark_grid = 5;
  double spacing_um = 7.36;

  void validate() const;
};

struct SynthPair {
  GrayImage fixed;
  GrayImage moving;
  RigidEstimate true_rigid;
  DisplacementField true_field;
  std::vector<LandmarkPair> landmarks;
};

/// Band-limited texture: seeded oriented sinusoids plus Gaussian-smoothed
/// white noise, rescaled to [0.05, 0.95].
GrayImage make_texture(Index width, Index height, std::uint64_t seed, double spacing_um = 1.0);

/// Rotating-direction wave of the given wavelength under a separable sine
/// window: |(u, v)| = amplitude * window <= amplitude, exactly zero on the
/// border rows and columns.
DisplacementField make_smooth_field(Index width, Index height, double amplitude, double wavelength,
                                    std::uint64_t seed);

/// Builds a pair whose moving image, pushed through the pipeline's forward
/// model with true_rigid and true_field, reproduces fixed up to blur and
/// noise. Scale is folded into true_field about the image centre.
SynthPair make_pair(const SynthSpec& spec);

}  // namespace wsireg

#endif  // WSIREG_SYNTH_HPP_
