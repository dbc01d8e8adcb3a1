#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "freqguide/tensor.hpp"

namespace freqguide {

/// SplitMix64 finaliser; a bijective 64-bit mixer.
[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x);

/// Stable 64-bit hash of a label (FNV-1a), for naming RNG streams.
[[nodiscard]] std::uint64_t label_hash(std::string_view label);

/// Derives an independent stream seed from a root seed and a path of stream
/// ids. Streams with different paths never share state, so work can be split
/// across threads or processes and still reproduce bit-exactly.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

/// Seeded generator. Uniform and normal draws are computed here rather than
/// through <random> distributions so the streams are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    double normal();

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

[[nodiscard]] ImageTensor standard_normal(const Shape& shape, Rng& rng);

}  // namespace freqguide
