#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace skelrep {

// Deterministic RNG. mt19937_64's output sequence is pinned by the standard;
// the std distributions are not, so every distribution here is hand-rolled.
// Artifacts produced from the same seed must be byte-identical across builds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}

  // Decorrelated child stream; (seed, stream) pairs map to distinct seeds.
  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t raw() { return g_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Unbiased uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n == 0");
    const std::uint64_t reject_below = (-n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t x = g_();
      if (x >= reject_below) return x % n;
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << g_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> g_;
    if (!is) throw std::invalid_argument("rng: bad serialized state");
  }

  static std::uint64_t mix(std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 g_;
};

// FNV-1a, used to derive per-name parameter init streams.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace skelrep
