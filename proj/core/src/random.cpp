#include "pbsae/random.hpp"

#include "pbsae/error.hpp"

namespace pbsae {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_stream_key(std::uint64_t seed, StreamPurpose purpose,
                                std::uint64_t index) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
  k = splitmix64(k ^ index);
  return k;
}

RandomStream::RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index) {
  const std::uint64_t key = derive_stream_key(seed, purpose, index);
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(index)};
  engine_.seed(seq);
}

double RandomStream::uniform() {
  return std::generate_canonical<double, 53>(engine_);
}

double RandomStream::normal() { return normal_(engine_); }

double RandomStream::normal(double mean, double sd) { return mean + sd * normal_(engine_); }

double RandomStream::exponential(double rate) {
  if (!(rate > 0.0)) throw InvalidArgument("exponential rate must be positive");
  std::exponential_distribution<double> d(rate);
  return d(engine_);
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("below(0) has no valid outcome");
  std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
  return d(engine_);
}

}  // namespace pbsae
