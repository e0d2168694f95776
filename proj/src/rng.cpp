#include "dylora/rng.hpp"

#include <cmath>

#include "dylora/errors.hpp"

namespace dylora {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), base_(mix64(seed + kGamma * mix64(stream + 1))) {}

Rng Rng::restore(const State& s) {
    Rng r(s.seed, s.stream);
    r.counter_ = s.counter;
    return r;
}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(base_ + counter_ * kGamma);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian(double sigma) {
    if (!(sigma > 0.0)) {
        throw ConfigError("gaussian: sigma must be positive");
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    // 1-u1 lies in (0,1], keeping the log argument away from zero.
    const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
    return sigma * radius * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw BoundsError("uniform_index: empty range");
    }
    // Multiply-shift bounded draw; bias is O(n / 2^64), draw count is fixed.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

} // namespace dylora
