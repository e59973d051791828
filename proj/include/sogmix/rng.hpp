#pragma once

#include <cstdint>
#include <vector>

namespace sogmix {

// splitmix64 in counter mode: hash(seed, stream, counter) is a pure
// function, so generation is reproducible across platforms and partitionable
// by row blocks.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter) {
  return splitmix64(splitmix64(seed ^ 0x2545f4914f6cdd1dULL * stream) + counter);
}

// Uniform in [0, 1); 53-bit mantissa.
inline double u01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint64_t next_bits() { return counter_hash(seed_, stream_, counter_++); }
  double next_u01() { return u01(next_bits()); }
  // Modulo mapping: the ~2^-53 bias is irrelevant next to determinism here.
  std::uint64_t next_below(std::uint64_t n) { return next_bits() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace sogmix
