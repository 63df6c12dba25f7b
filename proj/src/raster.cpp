#include "smoothdiff/raster.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace smoothdiff {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'D', 'I', 'M'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

double mean_squared_error(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ContractViolation("image shapes differ");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.pixels.size(); ++k) {
    const double d = a.pixels[k] - b.pixels[k];
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixels.size());
}

void write_image(const std::string& path, const Image& image) {
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw ContractViolation("image buffer does not match its shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.channels));
  for (double v : image.pixels) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw std::runtime_error("'" + path + "' is not an SDIM image");
  Image img;
  img.width = get_u32(in);
  img.height = get_u32(in);
  img.channels = get_u32(in);
  img.pixels.resize(img.width * img.height * img.channels);
  for (double& v : img.pixels) v = std::bit_cast<float>(get_u32(in));
  if (!in) throw std::runtime_error("'" + path + "' is truncated");
  return img;
}

void BoxScene::validate() const {
  if (resolution < 32) throw ContractViolation("box canvas needs at least 32x32 pixels");
  if (supersample < 1) throw ContractViolation("supersample must be at least 1");
  if (!(half_size > 0.0 && half_size < 0.5)) throw ContractViolation("box half size must lie in (0, 0.5)");
  if (intensities.empty()) throw ContractViolation("box scene needs at least one box");
}

namespace {

struct SampleSpan {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

// Sample k along an axis sits at (k + 0.5) / n; it is inside a square when
// |(k + 0.5) / n - c| < h.
SampleSpan sample_span(double c, double h, std::size_t n) {
  const double grid = static_cast<double>(n);
  const double lo = std::floor(grid * (c - h) - 0.5) + 1.0;
  const double hi = std::ceil(grid * (c + h) - 0.5);
  return {static_cast<std::size_t>(std::clamp(lo, 0.0, grid)), static_cast<std::size_t>(std::clamp(hi, 0.0, grid))};
}

std::vector<double> clamped_centers(const BoxScene& scene, const Vector& centers) {
  const std::size_t boxes = scene.num_boxes();
  if (static_cast<std::size_t>(centers.size()) != 2 * boxes)
    throw ContractViolation("expected " + std::to_string(2 * boxes) + " box coordinates");
  std::vector<double> out(2 * boxes);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = std::clamp(centers[static_cast<Eigen::Index>(k)], scene.half_size, 1.0 - scene.half_size);
  return out;
}

// Coverage of one square over the pixel grid: per-axis sample counts.
struct Footprint {
  std::size_t px_lo = 0, px_hi = 0, py_lo = 0, py_hi = 0;  // pixel rectangle, exclusive ends
  SampleSpan xs{0, 0}, ys{0, 0};

  bool empty() const { return px_hi <= px_lo || py_hi <= py_lo; }
  bool contains(std::size_t px, std::size_t py) const { return px >= px_lo && px < px_hi && py >= py_lo && py < py_hi; }
};

Footprint footprint(const BoxScene& scene, double cx, double cy) {
  const std::size_t ss = scene.supersample;
  const std::size_t n = scene.resolution * ss;
  Footprint f;
  f.xs = sample_span(cx, scene.half_size, n);
  f.ys = sample_span(cy, scene.half_size, n);
  if (f.xs.hi <= f.xs.lo || f.ys.hi <= f.ys.lo) return f;
  f.px_lo = f.xs.lo / ss;
  f.px_hi = (f.xs.hi - 1) / ss + 1;
  f.py_lo = f.ys.lo / ss;
  f.py_hi = (f.ys.hi - 1) / ss + 1;
  return f;
}

std::size_t overlap(SampleSpan s, std::size_t pixel, std::size_t ss) {
  const std::size_t lo = std::max(s.lo, pixel * ss);
  const std::size_t hi = std::min(s.hi, (pixel + 1) * ss);
  return hi > lo ? hi - lo : 0;
}

double covered_value(const BoxScene& scene, const Footprint& f, std::size_t b, std::size_t px, std::size_t py) {
  const std::size_t ss = scene.supersample;
  const double frac = static_cast<double>(overlap(f.xs, px, ss) * overlap(f.ys, py, ss)) / static_cast<double>(ss * ss);
  return scene.background + frac * (scene.intensities[b] - scene.background);
}

}  // namespace

Image render_boxes(const BoxScene& scene, const Vector& centers) {
  scene.validate();
  const auto c = clamped_centers(scene, centers);
  const std::size_t res = scene.resolution;
  const std::size_t boxes = scene.num_boxes();
  Image img(res, res, boxes, scene.background);
  for (std::size_t b = 0; b < boxes; ++b) {
    const Footprint f = footprint(scene, c[2 * b], c[2 * b + 1]);
    for (std::size_t py = f.py_lo; py < f.py_hi; ++py)
      for (std::size_t px = f.px_lo; px < f.px_hi; ++px) img.at(px, py, b) = covered_value(scene, f, b, px, py);
  }
  return img;
}

double box_loss(const BoxScene& scene, const Vector& centers, const Image& reference, const Vector& reference_centers) {
  scene.validate();
  const std::size_t res = scene.resolution;
  const std::size_t boxes = scene.num_boxes();
  if (reference.width != res || reference.height != res || reference.channels != boxes)
    throw ContractViolation("reference image does not match the scene");
  const auto c = clamped_centers(scene, centers);
  const auto rc = clamped_centers(scene, reference_centers);
  double sum = 0.0;
  for (std::size_t b = 0; b < boxes; ++b) {
    const Footprint cur = footprint(scene, c[2 * b], c[2 * b + 1]);
    const Footprint ref = footprint(scene, rc[2 * b], rc[2 * b + 1]);
    for (std::size_t py = cur.py_lo; py < cur.py_hi; ++py)
      for (std::size_t px = cur.px_lo; px < cur.px_hi; ++px) {
        const double d = covered_value(scene, cur, b, px, py) - reference.at(px, py, b);
        sum += d * d;
      }
    for (std::size_t py = ref.py_lo; py < ref.py_hi; ++py)
      for (std::size_t px = ref.px_lo; px < ref.px_hi; ++px) {
        if (cur.contains(px, py)) continue;
        const double d = scene.background - reference.at(px, py, b);
        sum += d * d;
      }
  }
  return sum / static_cast<double>(res * res * boxes);
}

}  // namespace smoothdiff
