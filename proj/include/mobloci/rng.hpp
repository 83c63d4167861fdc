#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace mobloci {

/**
 * Reproducible random stream. Stream `k` of master seed `s` is an mt19937_64
 * seeded through std::seed_seq with the 32-bit halves of (s, k), so every
 * replicate owns an independent stream regardless of which worker runs it.
 * Bounded draws and shuffles are done here rather than through
 * std::uniform_int_distribution / std::shuffle, whose outputs vary between
 * standard library implementations.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound), unbiased by rejection.
    std::uint64_t uniform_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Fisher-Yates.
    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

inline Rng substream(std::uint64_t seed, std::uint64_t index) { return Rng(seed, index); }

} // namespace mobloci
