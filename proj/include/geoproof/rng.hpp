#pragma once

#include <cmath>
#include <cstdint>

#include "geoproof/geo.hpp"

namespace geoproof {

/// Counter-based deterministic generator. Every draw is a pure function of
/// (seed, stream, counter), so adding draws on one stream never perturbs
/// another. Streams are typically keyed by entity id.
class CounterRng {
public:
    CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream_ + 1);
        z += 0xbf58476d1ce4e5b9ULL * (counter_++ + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double next_double_open() { return 1.0 - next_double(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    /// Box-Muller; consumes exactly two draws.
    double gaussian(double mean, double sigma) {
        const double u1 = next_double_open();
        const double u2 = next_double();
        return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    /// Exponential with rate `lambda` (mean 1/lambda).
    double exponential(double lambda) { return -std::log(next_double_open()) / lambda; }

    /// Uniform point in the disk of given radius around the origin.
    PlanarPoint in_disk(double radius) {
        const double r = radius * std::sqrt(next_double());
        const double a = kTwoPi * next_double();
        return PlanarPoint{r * std::cos(a), r * std::sin(a)};
    }

    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
};

}  // namespace geoproof
