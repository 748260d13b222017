#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cvxq {

// splitmix64 finalizer. Statistically strong enough for seed derivation
// and for the simulation streams used here.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Child seed for a labeled consumer. Derivation is a pure function of
// (master, label, index), so adding a consumer never perturbs the draws
// seen by any other.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t index = 0) {
    std::uint64_t h = mix64(master ^ fnv1a64(label));
    return mix64(h ^ mix64(index));
}

// Deterministic splitmix64 stream. All distributions are hand-rolled so
// draws are reproducible independent of the standard library.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(seed), seed_(seed) {}

    RngStream(std::uint64_t master, std::string_view label, std::uint64_t index = 0)
        : RngStream(derive_seed(master, label, index)) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t state_;
    std::uint64_t seed_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace cvxq
