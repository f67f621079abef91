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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "wsireg/raster.hpp"

namespace wsireg {
namespace {

TEST(ToGrayscale, LumaWeights) {
  RgbImage rgb(3, 1);
  rgb.r << 1, 0, 1;
  rgb.g << 1, 0, 0;
  rgb.b << 1, 0, 0;
  const GrayImage g = to_grayscale(rgb, 0.5);
  EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(2, 0), 0.299);
  EXPECT_EQ(g.width(), 3);
  EXPECT_EQ(g.height(), 1);
  EXPECT_EQ(g.spacing_um, 0.5);
}

TEST(TrimBlackBorder, RemovesFrame) {
  GrayImage img(20, 20, 1.0, 0.0);
  img.pixels.block(5, 5, 10, 10).setConstant(0.5);
  const auto [out, rect] = trim_black_border(img, 0.05);
  EXPECT_EQ(rect, (CropRect{5, 5, 10, 10}));
  EXPECT_EQ(out.width(), 10);
  EXPECT_EQ(out.height(), 10);
  EXPECT_TRUE((out.pixels == 0.5).all());
}

TEST(TrimBlackBorder, NoBorderIsIdentity) {
  std::mt19937_64 rng(3);
  GrayImage img = testing::smooth_random_image(17, 11, rng);
  img.pixels = 0.2 + 0.8 * img.pixels;
  const auto [out, rect] = trim_black_border(img, 0.05);
  EXPECT_EQ(rect, (CropRect{0, 0, 17, 11}));
  EXPECT_TRUE(out == img);
}

TEST(TrimBlackBorder, AllBlackThrows) {
  GrayImage img(8, 8, 1.0, 0.0);
  try {
    trim_black_border(img, 0.05);
    FAIL() << "expected AllBlack";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllBlack);
  }
}

TEST(TrimBlackBorder, NoisyBlackRowStillTrimmed) {
  // Isolated bright pixels in a black row do not lift its mean over the threshold.
  GrayImage img(40, 10, 1.0, 0.6);
  img.pixels.row(0).setZero();
  img.pixels(0, 7) = 0.5;
  const auto [out, rect] = trim_black_border(img, 0.02);
  EXPECT_EQ(rect.y0, 1);
  EXPECT_EQ(rect.height, 9);
}

TEST(TrimBlackBorder, CropMapsBackToSource) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> side(0, 6);
    const Index l = side(rng), r = side(rng), t = side(rng), b = side(rng);
    GrayImage content = testing::smooth_random_image(12, 9, rng);
    content.pixels = 0.3 + 0.7 * content.pixels;
    GrayImage img(12 + l + r, 9 + t + b, 1.0, 0.0);
    img.pixels.block(t, l, 9, 12) = content.pixels;
    const auto [out, rect] = trim_black_border(img, 0.02);
    ASSERT_EQ(rect, (CropRect{l, t, 12, 9}));
    for (Index j = 0; j < out.height(); ++j) {
      for (Index i = 0; i < out.width(); ++i) ASSERT_EQ(out(i, j), img(i + rect.x0, j + rect.y0));
    }
  }
}

TEST(Downsample, WorkingScaleArithmetic) {
  GrayImage img(3200, 3200, 0.23, 0.25);
  const GrayImage out = downsample(img, 32);
  EXPECT_EQ(out.width(), 100);
  EXPECT_EQ(out.height(), 100);
  EXPECT_NEAR(out.spacing_um, 7.36, 1e-12);
}

TEST(Downsample, ConstantAndCheckerboard) {
  GrayImage c(13, 7, 1.0, 0.7);
  for (Index f : {1, 2, 3, 5, 16}) {
    const GrayImage out = downsample(c, f);
    EXPECT_EQ(out.width(), (13 + f - 1) / f);
    EXPECT_EQ(out.height(), (7 + f - 1) / f);
    EXPECT_TRUE(((out.pixels - 0.7).abs() < 1e-15).all()) << "factor " << f;
  }
  GrayImage board(8, 6, 1.0);
  for (Index y = 0; y < 6; ++y)
    for (Index x = 0; x < 8; ++x) board(x, y) = double((x + y) % 2);
  EXPECT_TRUE((downsample(board, 2).pixels == 0.5).all());
}

TEST(Downsample, PartialEdgeBlocks) {
  GrayImage img(3, 1, 1.0);
  img.pixels << 0.2, 0.4, 0.9;
  const GrayImage out = downsample(img, 2);
  ASSERT_EQ(out.width(), 2);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(out(1, 0), 0.9);
}

TEST(Downsample, RandomizedShapesAndIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Index> dim(1, 40), fac(1, 9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index w = dim(rng), h = dim(rng), f = fac(rng);
    GrayImage img(w, h, 0.5);
    img.pixels.setRandom();
    img.pixels = img.pixels.abs();
    const GrayImage out = downsample(img, f);
    EXPECT_EQ(out.width(), (w + f - 1) / f);
    EXPECT_EQ(out.height(), (h + f - 1) / f);
    EXPECT_DOUBLE_EQ(out.spacing_um, 0.5 * double(f));
    EXPECT_TRUE(downsample(img, 1) == img);
  }
}

TEST(Rotate180, IndexReversalAndInvolution) {
  GrayImage row(2, 1, 1.0);
  row.pixels << 0.1, 0.9;
  const GrayImage r = rotate180(row);
  EXPECT_EQ(r(0, 0), 0.9);
  EXPECT_EQ(r(1, 0), 0.1);

  GrayImage single(1, 1, 1.0, 0.3);
  EXPECT_TRUE(rotate180(single) == single);

  std::mt19937_64 rng(8);
  const GrayImage img = testing::smooth_random_image(23, 14, rng);
  const GrayImage once = rotate180(img);
  for (Index y = 0; y < img.height(); ++y)
    for (Index x = 0; x < img.width(); ++x) ASSERT_EQ(once(x, y), img(22 - x, 13 - y));
  EXPECT_TRUE(rotate180(once) == img);
}

TEST(GaussianBlur, KernelTapsAndRadius) {
  const auto k = gaussian_kernel(1.2);
  EXPECT_EQ(k.size(), 2 * 4 + 1);  // ceil(3.6) = 4
  EXPECT_NEAR(k.sum(), 1.0, 1e-15);
  double norm = 0.0;
  for (int i = -4; i <= 4; ++i) norm += std::exp(-i * i / (2 * 1.44));
  for (int i = -4; i <= 4; ++i) EXPECT_NEAR(k(i + 4), std::exp(-i * i / (2 * 1.44)) / norm, 1e-15);
}

TEST(GaussianBlur, ConstantPreserved) {
  GrayImage img(9, 7, 1.0, 0.4);
  for (double sigma : {0.3, 1.0, 2.5}) {
    EXPECT_TRUE(((gaussian_blur(img, sigma).pixels - 0.4).abs() < 1e-15).all());
  }
}

TEST(GaussianBlur, ImpulseResponse) {
  GrayImage img(21, 21, 1.0, 0.0);
  img(10, 10) = 1.0;
  const double sigma = 1.5;
  const GrayImage out = gaussian_blur(img, sigma);
  // Independent evaluation of the truncated, normalized taps (radius 5).
  double norm = 0.0;
  for (int i = -5; i <= 5; ++i) norm += std::exp(-i * i / (2 * sigma * sigma));
  const double centre = 1.0 / norm;
  EXPECT_NEAR(out(10, 10), centre * centre, 1e-15);
  const double off = std::exp(-4 / (2 * sigma * sigma)) / norm;
  EXPECT_NEAR(out(12, 10), off * centre, 1e-15);
  EXPECT_NEAR(out.pixels.sum(), 1.0, 1e-12);
}

TEST(GaussianBlur, MeanAndRange) {
  std::mt19937_64 rng(21);
  // Zero margin around the content: the mean is conserved exactly up to rounding.
  GrayImage img(64, 64, 1.0, 0.0);
  img.pixels.block(16, 16, 32, 32) = testing::smooth_random_image(32, 32, rng).pixels;
  const GrayImage out = gaussian_blur(img, 1.0);
  EXPECT_NEAR(out.pixels.mean(), img.pixels.mean(), 1e-6);

  for (int trial = 0; trial < 10; ++trial) {
    GrayImage r = testing::smooth_random_image(19, 13, rng, 0);
    r.pixels = 0.1 + 0.5 * r.pixels;
    const GrayImage b = gaussian_blur(r, 0.5 + trial * 0.3);
    EXPECT_GE(b.pixels.minCoeff(), r.pixels.minCoeff());
    EXPECT_LE(b.pixels.maxCoeff(), r.pixels.maxCoeff());
  }
}

TEST(GaussianBlur, RejectsNonPositiveSigma) {
  GrayImage img(4, 4, 1.0, 0.5);
  EXPECT_THROW(gaussian_blur(img, 0.0), Error);
}

TEST(BilinearSample, ExactAtPixelCentres) {
  std::mt19937_64 rng(2);
  const GrayImage img = testing::smooth_random_image(7, 5, rng);
  for (Index y = 0; y < 5; ++y)
    for (Index x = 0; x < 7; ++x) EXPECT_EQ(bilinear_sample(img, double(x), double(y)), img(x, y));
}

TEST(BilinearSample, MidpointAndClamp) {
  GrayImage img(2, 1, 1.0);
  img.pixels << 0.2, 0.6;
  EXPECT_DOUBLE_EQ(bilinear_sample(img, 0.5, 0.0), 0.4);
  EXPECT_EQ(bilinear_sample(img, -5.0, 0.0), 0.2);
  EXPECT_EQ(bilinear_sample(img, 9.0, 3.0), 0.6);
  EXPECT_EQ(bilinear_sample(img, 0.5, -2.0), bilinear_sample(img, 0.5, 0.0));
}

TEST(BilinearSample, Lipschitz) {
  std::mt19937_64 rng(4);
  const GrayImage img = testing::smooth_random_image(12, 10, rng, 0);
  double max_adjacent = 0.0;
  for (Index y = 0; y < 10; ++y)
    for (Index x = 0; x < 12; ++x) {
      if (x + 1 < 12) max_adjacent = std::max(max_adjacent, std::abs(img(x + 1, y) - img(x, y)));
      if (y + 1 < 10) max_adjacent = std::max(max_adjacent, std::abs(img(x, y + 1) - img(x, y)));
    }
  std::uniform_real_distribution<double> pos(-1.0, 12.0), eps(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = pos(rng), y = pos(rng) * 10.0 / 12.0, e = eps(rng);
    EXPECT_LE(std::abs(bilinear_sample(img, x + e, y) - bilinear_sample(img, x, y)), e * max_adjacent + 1e-12);
    EXPECT_LE(std::abs(bilinear_sample(img, x, y + e) - bilinear_sample(img, x, y)), e * max_adjacent + 1e-12);
  }
}

TEST(BilinearSample, PartialsMatchFiniteDifferencesInsideCells) {
  std::mt19937_64 rng(6);
  const GrayImage img = testing::smooth_random_image(9, 9, rng);
  std::uniform_real_distribution<double> pos(0.1, 7.9);
  for (int i = 0; i < 200; ++i) {
    double x = pos(rng), y = pos(rng);
    if (std::abs(x - std::round(x)) < 0.01 || std::abs(y - std::round(y)) < 0.01) continue;
    const auto s = bilinear_sample_with_gradient(img.pixels, x, y);
    const double h = 1e-6;
    EXPECT_EQ(s.value, bilinear_sample(img, x, y));
    EXPECT_NEAR(s.d_dx, (bilinear_sample(img, x + h, y) - bilinear_sample(img, x - h, y)) / (2 * h), 1e-8);
    EXPECT_NEAR(s.d_dy, (bilinear_sample(img, x, y + h) - bilinear_sample(img, x, y - h)) / (2 * h), 1e-8);
  }
  const auto outside = bilinear_sample_with_gradient(img.pixels, -3.0, 4.5);
  EXPECT_EQ(outside.d_dx, 0.0);
}

TEST(Raster, FloatScalarInstantiates) {
  BasicGrayImage<float> img(4, 3, 1.0, 0.25f);
  EXPECT_EQ(rotate180(img).width(), 4);
  EXPECT_FLOAT_EQ(bilinear_sample(img, 1.5f, 1.0f), 0.25f);
  EXPECT_EQ(downsample(img, 2).width(), 2);
}

}  // namespace
}  // namespace wsireg
