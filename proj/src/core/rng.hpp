#pragma once

#include <cmath>
#include <cstdint>

namespace prefopt {

// Deterministic splitmix64 stream. Self-contained so that seeded runs
// reproduce bit-identically across standard libraries and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
    std::uint64_t bounded(std::uint64_t n) { return n <= 1 ? 0 : next_u64() % n; }

    // Box-Muller with a cached spare.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Avoid log(0).
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stateless seed derivation for per-example, per-epoch streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(a + 0x9e3779b97f4a7c15ULL);
    h = mix(h ^ (b + 0x9e3779b97f4a7c15ULL));
    h = mix(h ^ (c + 0x9e3779b97f4a7c15ULL));
    return h;
}

}  // namespace prefopt
