#pragma once

// Counter-based random streams (Philox4x32-10).
//
// A stream is identified by (seed, stream_id). The seed is the Philox key and
// the stream id occupies the upper half of the 128-bit counter, so every
// (seed, stream_id) pair addresses a disjoint 2^64-block sequence. Child
// streams are derived by hashing (stream_id, index) which makes sub-stream
// assignment independent of evaluation order.

#include <array>
#include <cstdint>

namespace breedrl {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

// One Philox4x32-10 block.
Philox4x32Counter philox4x32(Philox4x32Counter counter, Philox4x32Key key) noexcept;

// SplitMix64 finaliser; used for seed and stream derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }
  // Number of 32-bit words consumed so far.
  [[nodiscard]] std::uint64_t position() const noexcept { return block_ * 4 + used_ - 4; }

  // Independent child stream addressed by `index`. Does not advance this stream.
  [[nodiscard]] RngStream fork(std::uint64_t index) const noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Fair coin.
  bool bit() noexcept { return (next_u32() >> 31) != 0; }
  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() noexcept;
  // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape) noexcept;
  // Beta(a, b) from two gamma draws.
  double beta(double a, double b) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
};

}  // namespace breedrl
