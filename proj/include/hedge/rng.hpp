#pragma once

#include <cstdint>
#include <limits>

namespace hedge {

/// SplitMix64 finalizer; used to key per-path substreams.
std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// Deterministic 64-bit seed derived from (seed, salt), e.g. (training seed, epoch).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
///
/// Streams are keyed by (seed, stream id): the four state words are filled by a
/// SplitMix64 sequence started at mix(seed) ^ mix(stream + golden ratio). Path
/// p of a Monte Carlo batch always uses stream p, so any subset of paths can be
/// regenerated without touching the others.
class Xoshiro256pp {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256pp(std::uint64_t seed) noexcept;

    static Xoshiro256pp for_stream(std::uint64_t seed, std::uint64_t stream) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    /// Uniform double in [0, 1) from the top 53 bits.
    double uniform() noexcept;

private:
    std::uint64_t s_[4];
};

}  // namespace hedge
