#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace hsmoe {

/// Counter-based random stream built on Philox4x32-10.
///
/// The 64-bit seed is the Philox key. The upper 64 bits of the 128-bit
/// counter hold the stream id and the lower 64 bits count blocks, so every
/// (seed, stream_id) pair addresses its own non-overlapping sequence and can
/// be recreated anywhere without replaying other streams.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into <random>
/// distributions directly.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Exponential with rate 1.
  double exponential();
  /// Gamma with the given shape and unit scale.
  double gamma(double shape);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  unsigned next_ = 2;
  std::normal_distribution<double> normal_;
};

/// One Philox4x32-10 block: encrypts `counter` under `key`.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Mixes a tuple of integers into a stream id (SplitMix64 finalizer chain).
std::uint64_t derive_stream_id(std::initializer_list<std::uint64_t> parts);

}  // namespace hsmoe
