#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mvhet {

// All randomness in the library flows through this generator so that runs
// are bit-reproducible across platforms. Streams are derived by hashing a
// root seed with a tag and counters; dropout masks additionally use the
// stateless `keyed_uniform` so the same (key, index) always yields the
// same draw.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // warm up so that small seeds diverge immediately
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller; no spare caching to keep the stream
  // position a pure function of call count
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
};

inline Rng keyed_rng(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                     std::uint64_t b = 0) {
  return Rng(hash_mix(hash_mix(seed, hash_tag(tag)), hash_mix(a, b)));
}

// Stateless draw: uniform in [0,1) determined entirely by (key, index).
inline double keyed_uniform(std::uint64_t key, std::uint64_t index) {
  std::uint64_t s = hash_mix(key, index);
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

}  // namespace mvhet
