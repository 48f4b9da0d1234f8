#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gsq {

/// Seeded random stream with a portable Gaussian sampler.
///
/// std::normal_distribution is implementation-defined, so we draw Gaussians
/// with our own Box-Muller transform on top of mt19937_64. Output is then
/// bit-identical for a given seed on any conforming standard library, which
/// is what makes CSV output reproducible across builds.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Stream for trajectory `index` of an ensemble keyed by `seed`.
    /// SplitMix64 scrambling keeps per-trajectory streams decorrelated.
    static Rng for_trajectory(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    /// Uniform on (0, 1], never exactly 0 (safe for log()).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; pairs are cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    double gaussian(double mean, double variance) {
        return mean + std::sqrt(variance) * gaussian();
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace gsq
