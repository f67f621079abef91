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

#ifndef WSIREG_IO_HPP_
#define WSIREG_IO_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "wsireg/deform.hpp"
#include "wsireg/raster.hpp"

namespace wsireg {

/// Reads an 8- or 16-bit grayscale or RGB image (PNG, PGM or PPM) with
/// intensities scaled to [0, 1]. Alpha is discarded.
RgbImage read_rgb(const std::filesystem::path& path);

/// Same as read_rgb followed by luma conversion; grayscale files skip the
/// conversion and keep their exact values.
GrayImage read_gray(const std::filesystem::path& path, double spacing_um);

/// 8-bit grayscale PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const GrayImage& img);

/// "DFLD", u32 width, u32 height, then row-major (f32 u, f32 v), all little-endian.
std::string encode_dfld(const DisplacementField& field);
DisplacementField decode_dfld(std::string_view bytes);
void write_dfld(const std::filesystem::path& path, const DisplacementField& field);
DisplacementField read_dfld(const std::filesystem::path& path);

/// `iter,mse,smooth,total,lr`, shortest round-trip decimal formatting.
std::string format_trace_csv(const LossTrace& trace);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace wsireg

#endif  // WSIREG_IO_HPP_
