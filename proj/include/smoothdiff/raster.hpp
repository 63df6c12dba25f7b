#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "smoothdiff/kernels.hpp"

namespace smoothdiff {

/// Row-major image, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

double mean_squared_error(const Image& a, const Image& b);

/// File layout: 4-byte magic "SDIM", then width, height, channels as
/// little-endian uint32, then width*height*channels little-endian float32
/// values in row-major order with channels interleaved.
void write_image(const std::string& path, const Image& image);
Image read_image(const std::string& path);

/// Axis-aligned squares on the unit canvas over a constant background. Square
/// b is drawn into channel b only, so squares never occlude each other.
struct BoxScene {
  std::size_t resolution = 64;
  /// Point samples per pixel along each axis.
  std::size_t supersample = 4;
  double half_size = 1.0 / 16.0;
  double background = 0.0;
  std::vector<double> intensities;

  void validate() const;
  std::size_t num_boxes() const { return intensities.size(); }
};

/// centers = (x0, y0, x1, y1, ...) in canvas units. Each center is clamped to
/// [half_size, 1 - half_size] so a square never leaves the canvas. The result
/// has one channel per square; a pixel holds the supersampled coverage blend.
Image render_boxes(const BoxScene& scene, const Vector& centers);

/// mean_squared_error(render_boxes(scene, centers), reference) where
/// reference = render_boxes(scene, reference_centers). Per channel only the pixels
/// touched by that square at either placement are visited; every other pixel
/// holds the background in both images.
double box_loss(const BoxScene& scene, const Vector& centers, const Image& reference, const Vector& reference_centers);

}  // namespace smoothdiff
