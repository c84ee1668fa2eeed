#pragma once

#include <cstdint>

namespace sbp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based noise: every (step, layer, object, group) cell gets its own
// hash, so draws do not depend on evaluation order or threading.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t layer = 0;

  std::uint64_t bits(std::uint64_t object, std::uint64_t group) const {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ (layer << 40));
    h = splitmix64(h ^ object);
    return splitmix64(h ^ (group * 0xd1342543de82ef95ULL));
  }

  // Uniform on [0, 1) with 53 random bits.
  double unit(std::uint64_t object, std::uint64_t group) const {
    return static_cast<double>(bits(object, group) >> 11) * 0x1.0p-53;
  }
};

}  // namespace sbp
