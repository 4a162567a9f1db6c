#pragma once

#include <cmath>
#include <cstdint>

namespace lascar {

// SplitMix64 generator. Chosen over <random> engines because the standard
// distributions are implementation-defined; this gives bit-identical streams
// on every platform. Splittable: child streams are derived by hashing the
// parent state with a stream key, so batch consumers can draw independently
// of scheduling order.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9E3779B97F4A7C15ull)) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Box-Muller; draws two uniforms per call, no cached spare.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool coin() { return (next_u64() & 1u) != 0; }

    Rng split(uint64_t key) const { return Rng(mix(state_ ^ mix(key))); }

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
};

}  // namespace lascar
