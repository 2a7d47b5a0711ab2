#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace evd {

/// Deterministic RNG threaded explicitly through every stochastic operation.
///
/// The generator is std::mt19937_64 (its output sequence is pinned by the
/// standard). The uniform/normal mappings are implemented here rather than
/// via std::*_distribution, whose algorithms are implementation-defined;
/// this keeps streams bit-identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1): top 53 bits of the next word.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws two uniforms per pair and
    /// caches the second value.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // guard the log against u1 == 0
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Derives an independent child seed. Used for per-trajectory and
    /// per-run seed splitting: child = splitmix64(base ^ (stream+1)*GOLDEN).
    static uint64_t split(uint64_t base, uint64_t stream) {
        uint64_t z = base ^ ((stream + 1) * 0x9E3779B97F4A7C15ull);
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace evd
