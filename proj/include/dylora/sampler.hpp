#pragma once

#include <vector>

#include "dylora/rng.hpp"

namespace dylora {

enum class RankDistKind { Uniform, Geometric };

// Categorical law over the integer ranks {r_min..r_max}. Immutable after
// construction and freely shareable; sampling mutates only the caller's Rng.
struct RankDistribution {
    RankDistKind kind = RankDistKind::Uniform;
    double p = 0.0; // geometric parameter, unused for uniform
    int r_min = 1;
    int r_max = 1;
    std::vector<double> probabilities; // index 0 -> rank r_min

    int support_size() const { return r_max - r_min + 1; }
    double prob_of(int rank) const { return probabilities[rank - r_min]; }
};

RankDistribution make_uniform(int r_min, int r_max);

// probabilities proportional to p * (1-p)^(b - r_min), renormalized over the
// truncated support; lower ranks are strictly more probable.
RankDistribution make_geometric(int r_min, int r_max, double p);

// Inverse-CDF draw; consumes exactly one uniform01 per call.
int sample_rank(const RankDistribution& dist, Rng& rng);

} // namespace dylora
