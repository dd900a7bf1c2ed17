#pragma once

#include <cstdint>
#include <cmath>

namespace vismpc {

// Deterministic RNG with explicit sampling rules. We do not use the standard
// library distributions because their output sequences are
// implementation-defined; seeded runs must reproduce byte-identical artifacts.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 to spread low-entropy seeds over the state
        state_ = seed + 0x9E3779B97F4A7C15ull;
        for (int i = 0; i < 4; ++i) next_u64();
        have_spare_ = false;
    }

    // Derive an independent stream, e.g. one per episode or per worker.
    Rng fork(uint64_t stream) const {
        Rng r;
        r.state_ = state_ ^ (0xBF58476D1CE4E5B9ull * (stream + 1));
        for (int i = 0; i < 4; ++i) r.next_u64();
        r.have_spare_ = false;
        return r;
    }

    uint64_t next_u64() {
        // xorshift64* — small, fast, good enough for simulation draws
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1Dull;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

    // standard normal via Box-Muller, spare value cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace vismpc
