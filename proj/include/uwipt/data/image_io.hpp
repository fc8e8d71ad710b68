#pragma once

#include <png.h>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "uwipt/core/error.hpp"
#include "uwipt/data/image.hpp"

namespace uwipt {

enum class ImageFormat { Png, Ppm };

inline ImageFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return ImageFormat::Png;
  if (ext == ".ppm") return ImageFormat::Ppm;
  throw DataError("unsupported image extension '" + ext + "' for " + path.string() + " (expected .png or .ppm)");
}

inline std::string format_extension(ImageFormat f) { return f == ImageFormat::Png ? ".png" : ".ppm"; }

inline bool is_image_path(const std::filesystem::path& path) {
  try {
    format_for_path(path);
    return true;
  } catch (const DataError&) {
    return false;
  }
}

namespace detail {

inline void skip_ppm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  skip_ppm_space(in);
  in >> w;
  skip_ppm_space(in);
  in >> h;
  skip_ppm_space(in);
  in >> maxval;
  if (!in || w == 0 || h == 0 || maxval != 255) {
    throw DataError(path.string() + ": bad PPM header (need 8-bit P6 with nonzero extents)");
  }
  in.get();
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError(path.string() + ": truncated PPM payload");
  }
  return img;
}

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  if (png.width == 0 || png.height == 0) {
    png_image_free(&png);
    throw DataError(path.string() + ": empty PNG");
  }
  Image img(png.width, png.height);
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError(path.string() + ": " + msg);
  }
  return img;
}

/// Written through the low-level API so the bytes do not depend on a
/// timestamp or on libpng's simplified-API defaults.
inline void write_png(const Image& img, const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
  return format_for_path(path) == ImageFormat::Png ? detail::read_png(path) : detail::read_ppm(path);
}

inline void write_image(const Image& img, const std::filesystem::path& path) {
  if (format_for_path(path) == ImageFormat::Png) {
    detail::write_png(img, path);
  } else {
    detail::write_ppm(img, path);
  }
}

}  // namespace uwipt
