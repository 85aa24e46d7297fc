#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace iamcf {

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t sub = 0) {
  return mix64(seed ^ mix64(tag ^ mix64(sub)));
}

// Seed stream tags. One tag per purpose so reordering call sites does not
// silently change another stream.
namespace seed_tag {
constexpr std::uint64_t user_split = 0x5350'4c49'5455'5352ull;
constexpr std::uint64_t answer_split = 0x414e'5357'4552'5355ull;
constexpr std::uint64_t init = 0x494e'4954'5041'5241ull;
constexpr std::uint64_t epoch = 0x4550'4f43'484f'5244ull;
constexpr std::uint64_t user_order = 0x5553'4552'4f52'4452ull;
constexpr std::uint64_t synth = 0x5359'4e54'4853'4545ull;
}  // namespace seed_tag

// Deterministic RNG. mt19937_64's output sequence is pinned by the standard;
// the distributions below avoid std:: distribution objects, whose mapping is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform integer in [0, n), rejection sampled (n must be > 0)
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // uniform double in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // standard normal, Box-Muller
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace iamcf
