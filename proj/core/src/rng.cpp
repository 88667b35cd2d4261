#include "mmfusion/rng.hpp"

#include <cmath>
#include <numbers>

namespace mmf {

std::uint64_t splitmix64(std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal(double mean, double stddev) {
    if (stddev < 0.0) throw BadShape("next_normal: stddev must be >= 0");
    double u1 = next_uniform();
    const double u2 = next_uniform();
    while (u1 == 0.0) u1 = next_uniform(); // log(0) guard, probability 2^-53
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    // Modulo bias is negligible for the small n used here.
    return next_u64() % n;
}

Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.next_normal(mean, stddev);
    return t;
}

Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = lo + (hi - lo) * rng.next_uniform();
    return t;
}

} // namespace mmf
