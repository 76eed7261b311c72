#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

// Deterministic randomness utilities.
//
// All sampling goes through Rng, which wraps mt19937_64 but owns the mapping
// from raw bits to doubles, gaussians and categorical draws.  The standard
// library distributions are deliberately avoided: their output sequences are
// implementation-defined, and run artifacts must be reproducible byte for
// byte across toolchains.

namespace gacsim {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named sub-streams of a run seed.  Each consumer of randomness derives its
// own stream so that adding a consumer never shifts the draws of another.
enum class Stream : std::uint64_t {
  rollout = 1,   // action and context sampling during training
  lag = 2,       // randomized staleness schedule
  init = 3,      // parameter initialization (quadratic testbed)
  noise = 4,     // gradient noise (quadratic testbed)
  scratch = 5,   // test-local draws
};

// Mixes (seed, stream, step) into an independent 64-bit seed.  Step-indexed
// derivation lets a re-run of any single step reproduce its draws without
// replaying the steps before it.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                 std::uint64_t step) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(stream)));
  h = splitmix64(h ^ splitmix64(step));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; caches the second variate.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * kPi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform index in [0, n).
  std::size_t next_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("next_index: n must be positive");
    auto idx = static_cast<std::size_t>(next_double() * static_cast<double>(n));
    return idx < n ? idx : n - 1;
  }

  // Draws from a finite distribution by walking the CDF left to right.
  // Weights must be nonnegative and sum to something positive; they are
  // normalized on the fly.  The walk direction is part of the determinism
  // contract, so keep it left to right.
  std::size_t next_categorical(std::span<const double> weights) {
    if (weights.empty())
      throw std::invalid_argument("next_categorical: empty weights");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0))
        throw std::invalid_argument("next_categorical: negative weight");
      total += w;
    }
    if (!(total > 0.0))
      throw std::invalid_argument("next_categorical: weights sum to zero");
    const double u = next_double() * total;
    double cdf = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      cdf += weights[i];
      if (u < cdf) return i;
    }
    return weights.size() - 1;
  }

  // N(0, 1) vector.
  std::vector<double> gaussian_vector(std::size_t dim) {
    std::vector<double> out(dim);
    for (double& x : out) x = next_gaussian();
    return out;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gacsim
