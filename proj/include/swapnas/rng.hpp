// Deterministic counter-based random number generation.
//
// Everything in this toolkit that needs randomness (weight init, batch
// synthesis, genome sampling, search) draws from the splitmix64-style
// generator below so that results are bit-identical across platforms and
// thread counts. The generator is pure: output i of stream `seed` is
// mix64(seed + (i + 1) * kGolden), which also gives random access for
// batch synthesis (see formats documentation).

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace swapnas {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Value i of the stream identified by `seed`.
constexpr std::uint64_t stream_u64(std::uint64_t seed, std::uint64_t i) {
    return mix64(seed + (i + 1) * kGolden);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + kGolden + (a << 6) + (a >> 2)));
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Derive a child seed from a parent seed plus a label and indices, e.g.
// derive_seed(master, "child", cycle, i). Labels keep streams disjoint.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
    return hash_combine(hash_combine(hash_combine(seed, fnv1a64(label)), a), b);
}

// Uniform double in [0, 1) from a u64 (53 mantissa bits).
constexpr double u64_to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Standard normal from two u64 draws via Box-Muller (cosine branch only,
// no cached spare, so one normal always consumes exactly two counters).
inline double normals_from_u64(std::uint64_t a, std::uint64_t b) {
    const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = u64_to_unit(b);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

// Random access: standard normal number `index` of stream `seed`.
inline double normal_at(std::uint64_t seed, std::uint64_t index) {
    return normals_from_u64(stream_u64(seed, 2 * index), stream_u64(seed, 2 * index + 1));
}

// Sequential generator over a stream. Cheap to copy; never shared.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return stream_u64(seed_, counter_++); }

    double next_unit() { return u64_to_unit(next_u64()); }

    double next_normal() {
        const std::uint64_t a = next_u64();
        const std::uint64_t b = next_u64();
        return normals_from_u64(a, b);
    }

    // Unbiased-enough bounded draw (Lemire multiply-shift). n must be >= 1.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool next_bool() { return (next_u64() & 1ULL) != 0; }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace swapnas
