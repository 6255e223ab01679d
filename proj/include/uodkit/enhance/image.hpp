#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace uodkit {

/// Single-channel float image, row-major.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), data(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Plane&, const Plane&) = default;
};

/// H x W x 3 RGB image with interleaved channels, values in [0,1] at module
/// boundaries.
struct ImageF32 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  ImageF32() = default;
  ImageF32(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  std::size_t num_pixels() const { return height * width; }
  bool empty() const { return pixels.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  Plane channel(std::size_t c) const {
    Plane p(height, width);
    for (std::size_t i = 0; i < num_pixels(); ++i) p.data[i] = pixels[i * 3 + c];
    return p;
  }

  void set_channel(std::size_t c, const Plane& p) {
    if (p.height != height || p.width != width) throw std::invalid_argument("set_channel: size mismatch");
    for (std::size_t i = 0; i < num_pixels(); ++i) pixels[i * 3 + c] = p.data[i];
  }

  double channel_mean(std::size_t c) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < num_pixels(); ++i) acc += pixels[i * 3 + c];
    return num_pixels() ? acc / static_cast<double>(num_pixels()) : 0.0;
  }

  friend bool operator==(const ImageF32&, const ImageF32&) = default;
};

inline float clip01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline void clip_inplace(ImageF32& img) {
  for (float& v : img.pixels) v = clip01(v);
}

}  // namespace uodkit
