#pragma once

#include <cstdint>
#include <optional>

namespace smoothdiff {

/// Counter-based random stream. Output k is a keyed hash of k, so a stream is
/// fully determined by (seed, stream_id, number of draws so far) and streams
/// can be split for parallel work without coordination.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  /// Independent stream keyed on this stream's seed and a child id.
  RngStream fork(std::uint64_t child_id) const;

  /// Jump the counter ahead by `n` draws.
  void discard(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_a_;
  std::uint64_t key_b_;
  std::uint64_t counter_ = 0;
  std::optional<double> cached_normal_;
};

}  // namespace smoothdiff
