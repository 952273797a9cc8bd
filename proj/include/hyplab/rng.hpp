#pragma once

#include <cstdint>
#include <random>

#include "hyplab/torus.hpp"

namespace hyplab {

// Deterministic RNG wrapper. mt19937_64 has a pinned sequence by the
// standard, so seeded runs reproduce bit for bit across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        // 53-bit mantissa draw, independent of distribution internals.
        return double(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t raw() { return gen_(); }

    int below(int n) { return int(gen_() % std::uint64_t(n)); }

    TorusPoint point() { return TorusPoint(uniform(), uniform()); }

    // Uniform in the closed disc of radius r.
    TorusVector in_ball(double r) {
        const double rad = r * std::sqrt(uniform());
        const double th = uniform(0.0, 6.283185307179586);
        return {rad * std::cos(th), rad * std::sin(th)};
    }

    TorusVector direction() {
        const double th = uniform(0.0, 6.283185307179586);
        return {std::cos(th), std::sin(th)};
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace hyplab
