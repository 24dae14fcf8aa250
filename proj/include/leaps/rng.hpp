#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace leaps {

// Deterministic RNG. Gaussian sampling is hand-rolled (Box-Muller) because
// std::normal_distribution's output sequence is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_mix_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() {
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    long uniform_int(long lo, long hi_inclusive) {
        // modulo bias is negligible for the small ranges used here
        return lo + static_cast<long>(gen_() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t derive(std::uint64_t stream) const {
        // splitmix-style mix so per-stream seeds are decorrelated
        std::uint64_t z = seed_mix_ + stream * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static Rng for_stream(std::uint64_t seed, std::uint64_t stream) {
        return Rng(Rng(seed).derive(stream));
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace leaps
