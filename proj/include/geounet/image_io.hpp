#pragma once

// Grayscale PNG I/O (8- and 16-bit) plus the JSON sidecar carrying the
// geometric metadata that PNG cannot hold. Link against libpng.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geounet/geometry.hpp"

namespace geounet::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("libpng: ") + msg);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

// Writes `rows x cols` samples with the given bit depth (8 or 16), row-major.
inline void write_gray_png(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                           int bit_depth, const std::vector<std::uint16_t>& samples) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("png bit depth must be 8 or 16");
  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t bytes_per = bit_depth == 16 ? 2 : 1;
  std::vector<png_byte> line(cols * bytes_per);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::uint16_t v = samples[r * cols + c];
      if (bit_depth == 16) {
        line[2 * c] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        line[2 * c + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        line[c] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, line.data());
  }
  png_write_end(png, nullptr);
}

// 8-bit RGB, interleaved row-major.
inline void write_rgb_png(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                          const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != rows * cols * 3) throw std::invalid_argument("write_rgb_png: buffer size mismatch");
  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + r * cols * 3));
  }
  png_write_end(png, nullptr);
}

struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

inline GrayImage read_gray_png(const std::filesystem::path& path) {
  auto file = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_read_info(png, info);
  GrayImage img;
  img.cols = png_get_image_width(png, info);
  img.rows = png_get_image_height(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (img.bit_depth != 8 && img.bit_depth != 16)) {
    throw std::runtime_error("'" + path.string() + "' is not an 8/16-bit grayscale PNG");
  }
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<png_byte> line(stride);
  img.samples.resize(img.rows * img.cols);
  for (std::size_t r = 0; r < img.rows; ++r) {
    png_read_row(png, line.data(), nullptr);
    for (std::size_t c = 0; c < img.cols; ++c) {
      img.samples[r * img.cols + c] =
          img.bit_depth == 16 ? static_cast<std::uint16_t>((line[2 * c] << 8) | line[2 * c + 1])
                              : line[c];
    }
  }
  png_read_end(png, nullptr);
  return img;
}

// Intensities in [0,1] as 16-bit.
inline void save_image(const std::filesystem::path& path, const Grid<double>& g) {
  std::vector<std::uint16_t> s(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    s[k] = static_cast<std::uint16_t>(std::lround(std::clamp(g.values()[k], 0.0, 1.0) * 65535.0));
  }
  write_gray_png(path, g.rows(), g.cols(), 16, s);
}

// Binary masks as 8-bit 0/255.
inline void save_mask(const std::filesystem::path& path, const Grid<std::uint8_t>& g) {
  std::vector<std::uint16_t> s(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) s[k] = g.values()[k] ? 255 : 0;
  write_gray_png(path, g.rows(), g.cols(), 8, s);
}

inline Grid<double> load_image(const std::filesystem::path& path) {
  const GrayImage img = read_gray_png(path);
  const double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
  Grid<double> g(img.rows, img.cols);
  for (std::size_t k = 0; k < g.size(); ++k) g.values()[k] = img.samples[k] / scale;
  return g;
}

inline Grid<std::uint8_t> load_mask(const std::filesystem::path& path) {
  const GrayImage img = read_gray_png(path);
  const std::uint16_t half = img.bit_depth == 16 ? 32768 : 128;
  Grid<std::uint8_t> g(img.rows, img.cols);
  for (std::size_t k = 0; k < g.size(); ++k) g.values()[k] = img.samples[k] >= half;
  return g;
}

// Frame in gray with the predicted boundary in green and the true boundary in blue.
inline void save_overlay(const std::filesystem::path& path, const Grid<double>& frame,
                         const Grid<std::uint8_t>& pred, const Grid<std::uint8_t>& truth) {
  require_same_shape(frame, pred, "save_overlay");
  require_same_shape(frame, truth, "save_overlay");
  const std::size_t H = frame.rows(), W = frame.cols();
  auto edge = [&](const Grid<std::uint8_t>& m, std::size_t r, std::size_t c) {
    if (!m(r, c)) return false;
    return r == 0 || c == 0 || r + 1 == H || c + 1 == W || !m(r - 1, c) || !m(r + 1, c) || !m(r, c - 1) ||
           !m(r, c + 1);
  };
  std::vector<std::uint8_t> rgb(H * W * 3);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      auto* px = &rgb[(r * W + c) * 3];
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(frame(r, c), 0.0, 1.0) * 255.0));
      px[0] = px[1] = px[2] = g;
      if (edge(truth, r, c)) px[0] = 0, px[1] = 0, px[2] = 255;
      if (edge(pred, r, c)) px[0] = 0, px[1] = 255, px[2] = 0;
    }
  }
  write_rgb_png(path, H, W, rgb);
}

struct Sidecar {
  double mm_per_pixel = 0.0;
  Point center;
  double theta0 = 0.0;
  double r_max_px = 0.0;
};

inline nlohmann::json to_json(const Sidecar& s) {
  return {{"mm_per_pixel", s.mm_per_pixel},
          {"center", {s.center.row, s.center.col}},
          {"theta0", s.theta0},
          {"r_max_px", s.r_max_px}};
}

inline Sidecar sidecar_from_json(const nlohmann::json& j) {
  Sidecar s;
  s.mm_per_pixel = j.at("mm_per_pixel").get<double>();
  s.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
  s.theta0 = j.value("theta0", 0.0);
  s.r_max_px = j.value("r_max_px", 0.0);
  return s;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& png) {
  auto p = png;
  p.replace_extension(".json");
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_sidecar(const std::filesystem::path& png, const Sidecar& s) {
  write_text(sidecar_path(png), to_json(s).dump(2) + "\n");
}

inline void save_frame(const std::filesystem::path& path, const CartesianFrame& f) {
  save_image(path, f.pixels);
  write_sidecar(path, {f.mm_per_pixel, f.center, 0.0, static_cast<double>(f.side()) / 2.0});
}

inline void save_frame(const std::filesystem::path& path, const CartesianMask& m) {
  save_mask(path, m.pixels);
  write_sidecar(path, {m.mm_per_pixel, m.center, 0.0, static_cast<double>(m.side()) / 2.0});
}

inline void save_frame(const std::filesystem::path& path, const PolarFrame& p) {
  save_image(path, p.pixels);
  write_sidecar(path, {0.0, {}, p.theta0, p.r_max_px});
}

inline void save_frame(const std::filesystem::path& path, const PolarMask& p) {
  save_mask(path, p.pixels);
  write_sidecar(path, {0.0, {}, p.theta0, p.r_max_px});
}

inline CartesianFrame load_cartesian_frame(const std::filesystem::path& path) {
  const Sidecar s = sidecar_from_json(nlohmann::json::parse(read_text(sidecar_path(path))));
  return {load_image(path), s.mm_per_pixel, s.center};
}

inline CartesianMask load_cartesian_mask(const std::filesystem::path& path) {
  const Sidecar s = sidecar_from_json(nlohmann::json::parse(read_text(sidecar_path(path))));
  return {load_mask(path), s.mm_per_pixel, s.center};
}

}  // namespace geounet::io
