#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace chord {

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed for a named substream, e.g. derive_seed(run, {kStreamRollout, step, i, k}).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(root);
  for (std::uint64_t p : path) {
    s = mix64(s ^ mix64(p));
  }
  return s;
}

// Stream tags for derive_seed. Keeping them in one place avoids collisions.
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamRlDraw = 2,
  kStreamRollout = 3,
  kStreamSftShuffle = 4,
  kStreamEval = 5,
  kStreamTasks = 6,
  kStreamExpert = 7,
  kStreamSplit = 8,
};

// mt19937_64 core (bit-stable per the standard) with hand-rolled distributions,
// so streams do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // 53-bit uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + spare_ * stddev;
    }
    const double u = 1.0 - uniform01();  // avoid log(0)
    const double v = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 2.0 * M_PI * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + radius * std::cos(angle) * stddev;
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
      x = next_u64();
    }
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

  // Draw an index with probabilities exp(logp[i]); assumes logp is normalized.
  int categorical_from_logprobs(std::span<const double> logp) {
    const double u = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) {
      cum += std::exp(logp[i]);
      if (u < cum) {
        return static_cast<int>(i);
      }
    }
    return static_cast<int>(logp.size()) - 1;  // float slack on the tail
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace chord
