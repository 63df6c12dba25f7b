#include "smoothdiff/rng.hpp"

#include <cmath>
#include <numbers>

#include "smoothdiff/kernels.hpp"

namespace smoothdiff {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_a_(mix64(seed ^ mix64(stream_id + kGolden))),
      key_b_(mix64(mix64(seed + 0x632BE59BD9B4E019ull) ^ stream_id)) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(c * kGolden + key_a_) ^ key_b_);
}

double RngStream::uniform() {
  // 53 random bits, offset by half an ulp so both endpoints are excluded.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return z;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(phi);
  return r * std::cos(phi);
}

std::uint64_t RngStream::index(std::uint64_t n) {
  if (n == 0) throw ContractViolation("RngStream::index needs n > 0");
  // Lemire's multiply-shift with rejection for an unbiased result.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = -n % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

RngStream RngStream::fork(std::uint64_t child_id) const {
  return RngStream(mix64(key_a_ ^ mix64(child_id)), stream_id_ ^ mix64(child_id + key_b_));
}

void RngStream::discard(std::uint64_t n) {
  counter_ += n;
  cached_normal_.reset();
}

}  // namespace smoothdiff
