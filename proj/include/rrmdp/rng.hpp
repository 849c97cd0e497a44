#pragma once

#include <cstdint>
#include <span>

namespace rrmdp {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Derives an independent key for a sub-stream (episode, record block, iteration).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return detail::mix64(detail::mix64(seed) ^ detail::mix64(stream + detail::kGolden));
}

/**
 * Counter-based generator: the i-th draw is a pure function of (key, i).
 *
 * Draws are produced by the SplitMix64 finalizer applied to key + i * golden,
 * so any position of the stream can be reproduced without replaying the
 * prefix, and results do not depend on the standard library's distributions.
 */
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t counter = 0) noexcept
        : key_(detail::mix64(seed)), counter_(counter) {}

    constexpr std::uint64_t next_u64() noexcept {
        return detail::mix64(key_ + (++counter_) * detail::kGolden);
    }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Samples an index with probability proportional to `probs`.
    template <class Probs>
    std::size_t categorical(const Probs& probs) noexcept {
        const double u = uniform();
        double acc = 0.0;
        const auto n = static_cast<std::size_t>(probs.size());
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p = probs[static_cast<decltype(probs.size())>(i)];
            if (p <= 0.0) continue;
            last_positive = i;
            acc += p;
            if (u < acc) return i;
        }
        // rounding left u above the accumulated mass
        return last_positive;
    }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

} // namespace rrmdp
