#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace onh {

// Reproducible 64-bit generator: the splitmix64 step function iterated on a
// counter state. All randomness in the toolkit flows through this type so that
// results are identical across platforms and thread counts. The algorithm
// identifier below is recorded in model files.
inline constexpr std::string_view kRngId = "splitmix64-v1";

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, label, index). Streams for
// distinct labels or indices are decorrelated by hashing the label into the
// state before mixing.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a over the label
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = seed;
    s = splitmix64_mix(s ^ h);
    s = splitmix64_mix(s ^ index);
    return s;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Fixed-point multiply-high; bias is < n/2^64.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Standard normal via Box-Muller (no library distribution, so the stream
    // is identical on every platform).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(mean, sd) truncated to [0, inf) by resampling.
    double truncated_normal_nonneg(double mean, double sd) {
        for (;;) {
            double v = mean + sd * normal();
            if (v >= 0.0) return v;
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace onh
