#pragma once

// Seed handling: one 64-bit master seed fans out into independent named
// substreams so results do not depend on evaluation order.

#include <cstdint>
#include <random>

namespace rcpam {

using rng_engine = std::mt19937_64;

/// Stream identifiers used across the simulator.
namespace stream {
inline constexpr std::uint64_t bits = 1;
inline constexpr std::uint64_t esn = 2;
inline constexpr std::uint64_t w_in = 3;
inline constexpr std::uint64_t w_res = 4;
inline constexpr std::uint64_t out_mask = 5;
/// Slice i uses noise_base + i.
inline constexpr std::uint64_t noise_base = 0x1000;
} // namespace stream

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based split: the substream seed is a pure function of (master, id).
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id) noexcept
{
    return splitmix64(splitmix64(master) ^ splitmix64(stream_id * 0xD1B54A32D192ED03ULL + 1));
}

inline rng_engine make_stream(std::uint64_t master, std::uint64_t stream_id)
{
    return rng_engine{derive_seed(master, stream_id)};
}

} // namespace rcpam
