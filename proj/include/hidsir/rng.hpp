#pragma once

#include <cmath>
#include <cstdint>

namespace hidsir::rng {

// Counter-based random streams built on the splitmix64 finalizer.
//
// Reproducibility contract (part of the public interface):
//   * value n of stream (seed, id) is mix64(key(seed,id) + (n+1)*GOLDEN),
//     so any draw can be regenerated from (seed, id, n) alone;
//   * Brownian channel c of a path uses stream id c (channel-major layout);
//   * reserved stream ids: CTMC_STREAM for chain jumps, OBS-, PF- and
//     RESAMPLE_STREAM for the particle filter. Per-(step,particle) substreams
//     of the particle filter use id = PF_SUBSTREAM_BASE + step*N + particle.
//
// normal(2k) and normal(2k+1) are the cos/sin halves of one Box-Muller pair
// drawn from uniforms 2k and 2k+1, so normals are random-access as well.

inline constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t CTMC_STREAM = 1'000'000'000ull;
inline constexpr std::uint64_t PF_STREAM = 1'000'000'001ull;
inline constexpr std::uint64_t RESAMPLE_STREAM = 1'000'000'002ull;
inline constexpr std::uint64_t INIT_STREAM = 1'000'000'003ull;
inline constexpr std::uint64_t PF_SUBSTREAM_BASE = 2'000'000'000ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix64(seed + GOLDEN * mix64(stream_id + 1))) {}

    std::uint64_t bits(std::uint64_t n) const { return mix64(key_ + (n + 1) * GOLDEN); }

    // Uniform on (0,1], 53-bit resolution; never 0 so log() is safe.
    double uniform(std::uint64_t n) const {
        return static_cast<double>((bits(n) >> 11) + 1) * 0x1.0p-53;
    }

    double normal(std::uint64_t n) const {
        const std::uint64_t p = n >> 1;
        const double u1 = uniform(2 * p);
        const double u2 = uniform(2 * p + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * 3.14159265358979323846 * u2;
        return (n & 1) ? r * std::sin(th) : r * std::cos(th);
    }

private:
    std::uint64_t key_;
};

// Sequential normal cursor; bit-identical to Stream::normal(n) but computes
// each Box-Muller pair once.
class NormalSequence {
public:
    explicit NormalSequence(Stream s) : stream_(s) {}

    double operator()(std::uint64_t n) {
        const std::uint64_t p = n >> 1;
        if (p != cached_pair_) {
            const double u1 = stream_.uniform(2 * p);
            const double u2 = stream_.uniform(2 * p + 1);
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double th = 2.0 * 3.14159265358979323846 * u2;
            cos_ = r * std::cos(th);
            sin_ = r * std::sin(th);
            cached_pair_ = p;
        }
        return (n & 1) ? sin_ : cos_;
    }

private:
    Stream stream_;
    std::uint64_t cached_pair_ = ~0ull;
    double cos_ = 0.0, sin_ = 0.0;
};

// Seed for path `index` of a replication set: base seed + path index.
inline std::uint64_t path_seed(std::uint64_t base_seed, std::uint64_t index) {
    return base_seed + index;
}

} // namespace hidsir::rng
