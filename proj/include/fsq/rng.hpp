#pragma once

#include <cstdint>

namespace fsq {

// Counter-based generator: the value at (seed, stream, counter) is a pure
// hash, so any worker can draw sample k of stream s without coordination.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  // Independent child stream, e.g. one per ensemble member.
  CounterRng split(std::uint64_t child) const {
    return CounterRng(mix(seed_ ^ mix(stream_ + 0x632be59bd9b4e019ULL)), child);
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return mix(mix(seed_ + 0x9e3779b97f4a7c15ULL * (stream_ + 1)) ^ (counter * 0xd1b54a32d192ed03ULL));
  }
  // Uniform in (0, 1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }
  // Standard normal via Box-Muller on counters 2k and 2k+1.
  double normal(std::uint64_t k) const;

  // Sequential convenience interface.
  std::uint64_t next_bits() { return bits(counter_++); }
  double next_uniform() { return uniform(counter_++); }
  double next_normal() { return normal(counter_++); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace fsq
