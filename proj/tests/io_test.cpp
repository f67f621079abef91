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
#include <png.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "wsireg/io.hpp"

namespace fs = std::filesystem;

namespace wsireg {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("wsireg_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

// Minimal libpng writer for sample layouts the library itself never emits.
void write_png_samples(const fs::path& path, int w, int h, int depth, int color, const std::vector<std::uint16_t>& s) {
  const int channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const int bytes = depth / 8;
  std::vector<png_byte> buf(std::size_t(w * h * channels * bytes));
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (bytes == 2) {
      buf[2 * i] = png_byte(s[i] >> 8);
      buf[2 * i + 1] = png_byte(s[i] & 0xFF);
    } else {
      buf[i] = png_byte(s[i]);
    }
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, buf.data() + std::size_t(y * w * channels * bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

TEST_F(IoTest, EightBitPngRoundTrip) {
  GrayImage img(7, 5, 2.5);
  for (Index i = 0; i < img.size(); ++i) img.pixels.data()[i] = double(i * 7 % 256) / 255.0;
  write_png(dir_ / "a.png", img);
  const GrayImage back = read_gray(dir_ / "a.png", 2.5);
  EXPECT_TRUE(back == img);
  EXPECT_EQ(back.spacing_um, 2.5);
}

TEST_F(IoTest, SixteenBitGrayPng) {
  write_png_samples(dir_ / "g16.png", 3, 2, 16, PNG_COLOR_TYPE_GRAY, {0, 65535, 1000, 32768, 12, 40000});
  const GrayImage img = read_gray(dir_ / "g16.png", 1.0);
  ASSERT_EQ(img.width(), 3);
  EXPECT_EQ(img(1, 0), 1.0);
  EXPECT_EQ(img(2, 0), 1000.0 / 65535.0);
  EXPECT_EQ(img(2, 1), 40000.0 / 65535.0);
}

TEST_F(IoTest, RgbPngUsesLuma) {
  write_png_samples(dir_ / "rgb.png", 2, 1, 8, PNG_COLOR_TYPE_RGB, {255, 0, 0, 10, 200, 30});
  const RgbImage rgb = read_rgb(dir_ / "rgb.png");
  EXPECT_EQ(rgb.r(0, 0), 1.0);
  EXPECT_EQ(rgb.g(0, 1), 200.0 / 255.0);
  const GrayImage g = read_gray(dir_ / "rgb.png", 1.0);
  EXPECT_NEAR(g(0, 0), 0.299, 1e-15);
  EXPECT_NEAR(g(1, 0), (0.299 * 10 + 0.587 * 200 + 0.114 * 30) / 255.0, 1e-15);
}

TEST_F(IoTest, PnmVariants) {
  write_text(dir_ / "a.pgm", "P2\n# comment\n3 1\n10\n0 5 10\n");
  GrayImage a = read_gray(dir_ / "a.pgm", 1.0);
  EXPECT_EQ(a(1, 0), 0.5);
  EXPECT_EQ(a(2, 0), 1.0);

  write_text(dir_ / "b.pgm", std::string("P5\n2 1\n255\n") + char(0) + char(255));
  GrayImage b = read_gray(dir_ / "b.pgm", 1.0);
  EXPECT_EQ(b(0, 0), 0.0);
  EXPECT_EQ(b(1, 0), 1.0);

  write_text(dir_ / "c.pgm", std::string("P5 1 1 65535\n") + char(0x80) + char(0x00));
  EXPECT_EQ(read_gray(dir_ / "c.pgm", 1.0)(0, 0), 32768.0 / 65535.0);

  write_text(dir_ / "d.ppm", std::string("P6\n1 1\n255\n") + char(255) + char(255) + char(255));
  EXPECT_NEAR(read_gray(dir_ / "d.ppm", 1.0)(0, 0), 1.0, 1e-15);
  write_text(dir_ / "e.ppm", "P3\n1 1\n255\n0 255 0\n");
  EXPECT_NEAR(read_gray(dir_ / "e.ppm", 1.0)(0, 0), 0.587, 1e-15);
}

TEST_F(IoTest, BadFilesAreIoErrors) {
  auto code_of = [](const fs::path& p) {
    try {
      read_gray(p, 1.0);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::EmptyInput;
  };
  EXPECT_EQ(code_of(dir_ / "missing.png"), ErrorCode::IoError);
  write_text(dir_ / "junk.png", "\x89PNG\r\n\x1a\n garbage");
  EXPECT_EQ(code_of(dir_ / "junk.png"), ErrorCode::IoError);
  write_text(dir_ / "short.pgm", "P5\n4 4\n255\nab");
  EXPECT_EQ(code_of(dir_ / "short.pgm"), ErrorCode::IoError);
  write_text(dir_ / "what.txt", "hello");
  EXPECT_EQ(code_of(dir_ / "what.txt"), ErrorCode::IoError);
}

TEST(Dfld, ByteLayout) {
  auto f = DisplacementField::Zero(2, 1);
  f.u(0, 0) = 1.0;
  f.v(0, 0) = -2.0;
  f.u(0, 1) = 0.5;
  const std::string bytes = encode_dfld(f);
  const std::string expected("DFLD\x02\0\0\0\x01\0\0\0"
                             "\0\0\x80\x3f\0\0\0\xc0"
                             "\0\0\0\x3f\0\0\0\0",
                             28);
  EXPECT_EQ(bytes, expected);
}

TEST(Dfld, RoundTripProperty) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> uni(-50.0f, 50.0f);
  std::uniform_int_distribution<Index> dim(1, 40);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = DisplacementField::Zero(dim(rng), dim(rng));
    for (Index i = 0; i < f.u.size(); ++i) {
      f.u.data()[i] = uni(rng);
      f.v.data()[i] = uni(rng);
    }
    EXPECT_TRUE(decode_dfld(encode_dfld(f)) == f);
  }
  EXPECT_THROW(decode_dfld("DFL"), Error);
  EXPECT_THROW(decode_dfld(std::string("DFLD\x01\0\0\0\x01\0\0\0", 12)), Error);
}

TEST(TraceCsv, HeaderAndRows) {
  LossTrace trace;
  trace.push_back({0, 0, 0, 1, 0.25, 0.0, 0.25, 0.001});
  trace.push_back({1, 0, 1, 1, 0.125, 0.5, 0.13, 0.0});
  const std::string csv = format_trace_csv(trace);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,mse,smooth,total,lr");
  EXPECT_NE(csv.find("\n0,0.25,0,0.25,0.001\n"), std::string::npos) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

}  // namespace
}  // namespace wsireg
