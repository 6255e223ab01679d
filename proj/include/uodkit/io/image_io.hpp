#pragma once

// 8-bit RGB image files: PNG through libpng's simplified API, PPM (P6) by hand.

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uodkit/enhance/image.hpp"

namespace uodkit {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool has_ext(const std::filesystem::path& p, const char* ext) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

inline std::uint8_t quantize(float v) { return static_cast<std::uint8_t>(std::lround(clip01(v) * 255.0f)); }

inline ImageF32 from_bytes(std::size_t h, std::size_t w, const std::vector<std::uint8_t>& bytes) {
  ImageF32 img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
  return img;
}

inline std::vector<std::uint8_t> to_bytes(const ImageF32& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize(img.pixels[i]);
  return out;
}

inline ImageF32 read_png(const std::filesystem::path& path) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + im.message);
  im.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&im);
    throw IoError("cannot decode PNG " + path.string() + ": " + im.message);
  }
  return from_bytes(im.height, im.width, buf);
}

inline void write_png(const std::filesystem::path& path, const ImageF32& img) {
  png_image im{};
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width);
  im.height = static_cast<png_uint_32>(img.height);
  im.format = PNG_FORMAT_RGB;
  const auto bytes = to_bytes(img);
  if (!png_image_write_to_file(&im, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + im.message);
}

inline std::string ppm_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else if (c != EOF) {
      tok.push_back(static_cast<char>(c));
    }
  }
  return tok;
}

inline ImageF32 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw IoError(path.string() + ": only 8-bit PPM with maxval 255 supported");
  std::vector<std::uint8_t> buf(w * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated PPM");
  return from_bytes(h, w, buf);
}

inline void write_ppm(const std::filesystem::path& path, const ImageF32& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  const auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

/// Reads PNG or PPM (chosen by extension) into [0,1] floats.
inline ImageF32 read_image(const std::filesystem::path& path) {
  if (detail::has_ext(path, ".ppm")) return detail::read_ppm(path);
  if (detail::has_ext(path, ".png")) return detail::read_png(path);
  throw IoError(path.string() + ": unsupported image extension (use .png or .ppm)");
}

/// Writes 8-bit RGB; values are clipped to [0,1] and rounded.
inline void write_image(const std::filesystem::path& path, const ImageF32& img) {
  if (img.empty()) throw IoError("refusing to write empty image " + path.string());
  if (detail::has_ext(path, ".ppm"))
    detail::write_ppm(path, img);
  else if (detail::has_ext(path, ".png"))
    detail::write_png(path, img);
  else
    throw IoError(path.string() + ": unsupported image extension (use .png or .ppm)");
}

/// Rounds every value to the nearest 8-bit level, as a write/read cycle would.
inline ImageF32 quantize8(const ImageF32& img) {
  ImageF32 out = img;
  for (float& v : out.pixels) v = detail::quantize(v) / 255.0f;
  return out;
}

}  // namespace uodkit
