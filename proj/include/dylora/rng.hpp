#pragma once

#include <cstdint>

namespace dylora {

// Counter-based pseudo-random generator (SplitMix64 stream). The entire
// state is (seed, stream, counter), so identical seeds give identical draw
// sequences on every platform and the state round-trips losslessly.
//
// One Rng instance is owned by exactly one logical task at a time.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    // N(0, sigma^2) via Box-Muller; consumes exactly two u64 draws.
    double gaussian(double sigma);

    // Uniform index in [0, n); n must be nonzero.
    std::uint64_t uniform_index(std::uint64_t n);

    struct State {
        std::uint64_t seed = 0;
        std::uint64_t stream = 0;
        std::uint64_t counter = 0;
    };
    State state() const { return {seed_, stream_, counter_}; }
    static Rng restore(const State& s);

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::uint64_t base_; // mixed from (seed, stream), not serialized
};

// Stream ids used to decorrelate the independent draw sequences of one run.
inline constexpr std::uint64_t kTaskStream = 1;
inline constexpr std::uint64_t kInitStream = 2;
inline constexpr std::uint64_t kTrainStream = 3;

} // namespace dylora
