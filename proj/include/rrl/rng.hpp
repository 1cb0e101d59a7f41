#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace rrl {

// Deterministic label-keyed random streams. Every consumer of randomness
// derives its own stream from (seed, label), so adding or reordering one
// consumer never perturbs the draws seen by another. The generator and the
// variate transforms are hand-rolled so that sequences are identical across
// standard libraries and platforms.

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class RngStream {
  public:
    RngStream(std::uint64_t seed, std::string_view label)
        : state_(mix64(mix64(seed) ^ fnv1a64(label))) {
        // decorrelate nearby (seed, label) pairs
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1); safe for logs
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // uniform integer in [0, n), unbiased
    int uniform_int(int n) noexcept {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<int>(x % bound);
    }

    // standard normal via Box-Muller (cached spare)
    double normal() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool coin() noexcept { return (next_u64() & 1ull) != 0; }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Convenience for hierarchical labels: stream(seed, "rollout/rlvr1/e3/s17").
inline RngStream seeded_stream(std::uint64_t seed, std::string_view label) {
    return RngStream(seed, label);
}

}  // namespace rrl
