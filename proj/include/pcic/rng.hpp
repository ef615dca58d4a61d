#pragma once

#include <cmath>
#include <cstdint>

namespace pcic {

/// Deterministic 64-bit generator (splitmix64 core). All randomness in the
/// toolkit funnels through this type so that runs are reproducible from a
/// single seed, independent of the standard library's distribution
/// implementations. State is one u64, trivially serializable.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer uniform in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

/// Stateless per-key derivation: mixes (seed, key) into a fresh stream.
/// Used to seed per-step / per-frame generators so that resuming a run at
/// step k reproduces exactly the draws of an uninterrupted run.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t key) {
    Rng mixer(seed ^ (0xA24BAED4963EE407ULL + key * 0x9FB21C651E98DF25ULL));
    std::uint64_t s = mixer.next_u64();
    return Rng(s);
}

}  // namespace pcic
