#pragma once

#include <cstdint>
#include <vector>

#include "mmfusion/tensor.hpp"

namespace mmf {

// One SplitMix64 output step for the given state value.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic seeded random source. SplitMix64 stream; uniforms take the
// top 53 bits over 2^53; normals are Box-Muller on consecutive uniforms
// (one variate per call, the sine half is discarded).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double next_uniform();
    double next_normal(double mean = 0.0, double stddev = 1.0);

    // Pick an integer uniformly from [0, n).
    std::uint64_t next_below(std::uint64_t n);

    // Substream seed for parallel-safe per-item generation.
    static std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
        return splitmix64(seed ^ index);
    }

private:
    std::uint64_t state_;
};

Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev);
Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi);

} // namespace mmf
