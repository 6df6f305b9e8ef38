#pragma once

// Keyed random streams: stream (seed, key) is a fixed function of both values,
// so a replicate draws the same numbers no matter which thread runs it or what
// procedure consumes them.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ebfcr/model.hpp"

namespace ebfcr {

class KeyedStream {
 public:
  KeyedStream(std::uint64_t seed, std::uint64_t key) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32), 0x9e3779b9u};
    engine_.seed(seq);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; values are produced in pairs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct SimulatedBatch {
  std::vector<double> theta;
  std::vector<double> x;
};

/// Draws m pairs from the spike-and-slab model into `out`, reusing storage.
inline void simulate_into(const MixturePrior& prior, std::size_t m, KeyedStream& stream, SimulatedBatch& out) {
  out.theta.resize(m);
  out.x.resize(m);
  const double tau = std::sqrt(prior.tau2);
  const double sigma = std::sqrt(prior.sigma2);
  for (std::size_t i = 0; i < m; ++i) {
    const bool slab = stream.uniform() < prior.p;
    const double theta = slab ? tau * stream.normal() : 0.0;
    out.theta[i] = theta;
    out.x[i] = theta + sigma * stream.normal();
  }
}

inline SimulatedBatch simulate(const MixturePrior& prior, std::size_t m, std::uint64_t seed, std::uint64_t key = 0) {
  prior.validate();
  KeyedStream stream(seed, key);
  SimulatedBatch out;
  simulate_into(prior, m, stream, out);
  return out;
}

}  // namespace ebfcr
