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

#include "wsireg/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <vector>

namespace wsireg {
namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::IoError, path.string() + ": " + what);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) io_fail(path, std::string("cannot open (") + std::strerror(errno) + ")");
  return f;
}

// Decoded samples before normalization.
struct RawImage {
  Index width = 0;
  Index height = 0;
  int channels = 0;  // 1 or 3
  double max_code = 255.0;
  std::vector<std::uint16_t> samples;
};

RgbImage to_rgb(const RawImage& raw) {
  RgbImage img(raw.width, raw.height);
  const std::size_t c = static_cast<std::size_t>(raw.channels);
  for (Index i = 0; i < raw.width * raw.height; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * c;
    const double r = raw.samples[base] / raw.max_code;
    img.r.data()[i] = r;
    img.g.data()[i] = c == 3 ? raw.samples[base + 1] / raw.max_code : r;
    img.b.data()[i] = c == 3 ? raw.samples[base + 2] / raw.max_code : r;
  }
  return img;
}

bool is_png(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  return in.gcount() == 8 && png_sig_cmp(sig.data(), 0, 8) == 0;
}

RawImage read_png_raw(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) io_fail(path, "libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  RawImage raw;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(path, "malformed PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  raw.width = png_get_image_width(png, info);
  raw.height = png_get_image_height(png, info);
  raw.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  raw.max_code = out_depth == 16 ? 65535.0 : 255.0;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(raw.height));
  rows.resize(static_cast<std::size_t>(raw.height));
  for (Index y = 0; y < raw.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (raw.channels != 1 && raw.channels != 3) io_fail(path, "unsupported channel layout");
  const std::size_t n = static_cast<std::size_t>(raw.width * raw.height * raw.channels);
  raw.samples.resize(n);
  if (out_depth == 16) {
    std::memcpy(raw.samples.data(), buffer.data(), n * 2);
  } else {
    std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n), raw.samples.begin());
  }
  return raw;
}

RawImage read_pnm_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto next_uint = [&]() -> long {
    skip_space();
    long v = 0;
    const auto [ptr, ec] = std::from_chars(data.data() + pos, data.data() + data.size(), v);
    if (ec != std::errc() || v < 0) io_fail(path, "malformed PNM header or sample");
    pos = static_cast<std::size_t>(ptr - data.data());
    return v;
  };
  if (data.size() < 2 || data[0] != 'P') io_fail(path, "not a PNG, PGM or PPM file");
  const char kind = data[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') io_fail(path, "unsupported PNM variant");
  pos = 2;
  RawImage raw;
  raw.width = next_uint();
  raw.height = next_uint();
  const long maxval = next_uint();
  if (raw.width < 1 || raw.height < 1 || maxval < 1 || maxval > 65535) io_fail(path, "invalid PNM dimensions");
  raw.channels = (kind == '3' || kind == '6') ? 3 : 1;
  raw.max_code = double(maxval);
  const std::size_t n = static_cast<std::size_t>(raw.width * raw.height * raw.channels);
  raw.samples.resize(n);
  if (kind == '2' || kind == '3') {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = static_cast<std::uint16_t>(std::min(next_uint(), maxval));
  } else {
    ++pos;  // single whitespace byte after maxval
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    if (data.size() < pos + n * bytes) io_fail(path, "truncated PNM data");
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bytes);
      raw.samples[i] = bytes == 2 ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : p[0];
    }
  }
  return raw;
}

RawImage read_raw(const fs::path& path) {
  if (!fs::exists(path)) io_fail(path, "no such file");
  return is_png(path) ? read_png_raw(path) : read_pnm_raw(path);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

RgbImage read_rgb(const fs::path& path) { return to_rgb(read_raw(path)); }

GrayImage read_gray(const fs::path& path, double spacing_um) {
  const RawImage raw = read_raw(path);
  if (raw.channels == 1) {
    GrayImage img(raw.width, raw.height, spacing_um);
    for (Index i = 0; i < img.size(); ++i) img.pixels.data()[i] = raw.samples[static_cast<std::size_t>(i)] / raw.max_code;
    return img;
  }
  return to_grayscale(to_rgb(raw), spacing_um);
}

void write_png(const fs::path& path, const GrayImage& img) {
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.pixels.data()[i], 0.0, 1.0);
    buffer[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) io_fail(path, "libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(path, "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < img.height(); ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + y * img.width();
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) io_fail(path, "write failed");
}

std::string encode_dfld(const DisplacementField& field) {
  std::string out = "DFLD";
  put_u32(out, static_cast<std::uint32_t>(field.width()));
  put_u32(out, static_cast<std::uint32_t>(field.height()));
  out.reserve(out.size() + static_cast<std::size_t>(field.width() * field.height()) * 8);
  for (Index y = 0; y < field.height(); ++y) {
    for (Index x = 0; x < field.width(); ++x) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(field.u(y, x))));
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(field.v(y, x))));
    }
  }
  return out;
}

DisplacementField decode_dfld(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "DFLD") throw Error(ErrorCode::IoError, "missing DFLD header");
  const std::uint32_t w = get_u32(bytes, 4);
  const std::uint32_t h = get_u32(bytes, 8);
  if (bytes.size() != 12 + std::size_t(w) * h * 8) throw Error(ErrorCode::IoError, "DFLD payload size mismatch");
  auto field = DisplacementField::Zero(Index(w), Index(h));
  std::size_t at = 12;
  for (Index y = 0; y < Index(h); ++y) {
    for (Index x = 0; x < Index(w); ++x) {
      field.u(y, x) = std::bit_cast<float>(get_u32(bytes, at));
      field.v(y, x) = std::bit_cast<float>(get_u32(bytes, at + 4));
      at += 8;
    }
  }
  return field;
}

void write_dfld(const fs::path& path, const DisplacementField& field) { write_text(path, encode_dfld(field)); }

DisplacementField read_dfld(const fs::path& path) {
  try {
    return decode_dfld(read_text(path));
  } catch (const Error& e) {
    io_fail(path, e.what());
  }
}

std::string format_trace_csv(const LossTrace& trace) {
  std::string out = "iter,mse,smooth,total,lr\n";
  char buf[64];
  for (const auto& r : trace) {
    out += std::to_string(r.iter);
    for (double v : {r.mse, r.smooth, r.total, r.lr}) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) io_fail(path, "write failed");
}

}  // namespace wsireg
