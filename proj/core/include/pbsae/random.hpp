#pragma once

#include <cstdint>
#include <random>

namespace pbsae {

// Purposes keep the streams used for different parts of a run disjoint.
enum class StreamPurpose : std::uint64_t {
  aux_frame = 1,
  responses = 2,
  sample = 3,
  draws = 5,
  resample = 6,
  test = 99,
};

// Mixes (seed, purpose, index) into a 64-bit key with splitmix64 rounds.
std::uint64_t derive_stream_key(std::uint64_t seed, StreamPurpose purpose,
                                std::uint64_t index) noexcept;

// A reproducible random stream keyed by (seed, purpose, index). Two streams
// with the same key produce the same sequence regardless of what other streams
// were created or consumed in between.
class RandomStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed,
                        StreamPurpose purpose = StreamPurpose::test,
                        std::uint64_t index = 0);

  engine_type& engine() noexcept { return engine_; }

  double uniform();                       // [0, 1)
  double normal();                        // N(0, 1)
  double normal(double mean, double sd);
  double exponential(double rate);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace pbsae
