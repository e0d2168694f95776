#include "dylora/sampler.hpp"

#include <cmath>
#include <string>

#include "dylora/errors.hpp"

namespace dylora {

namespace {

void check_range(int r_min, int r_max) {
    if (r_min < 1 || r_min > r_max) {
        throw ConfigError("rank distribution: need 1 <= r_min <= r_max, got [" +
                          std::to_string(r_min) + "," + std::to_string(r_max) + "]");
    }
}

} // namespace

RankDistribution make_uniform(int r_min, int r_max) {
    check_range(r_min, r_max);
    RankDistribution d;
    d.kind = RankDistKind::Uniform;
    d.r_min = r_min;
    d.r_max = r_max;
    const int n = d.support_size();
    d.probabilities.assign(static_cast<std::size_t>(n), 1.0 / n);
    return d;
}

RankDistribution make_geometric(int r_min, int r_max, double p) {
    check_range(r_min, r_max);
    if (!(p > 0.0) || !(p < 1.0)) {
        throw ConfigError("geometric distribution: p must lie in (0,1), got " +
                          std::to_string(p));
    }
    RankDistribution d;
    d.kind = RankDistKind::Geometric;
    d.p = p;
    d.r_min = r_min;
    d.r_max = r_max;
    const int n = d.support_size();
    d.probabilities.resize(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = p * std::pow(1.0 - p, i);
        d.probabilities[static_cast<std::size_t>(i)] = w;
        total += w;
    }
    for (double& q : d.probabilities) {
        q /= total;
    }
    return d;
}

int sample_rank(const RankDistribution& dist, Rng& rng) {
    const double u = rng.uniform01();
    double cum = 0.0;
    const int n = dist.support_size();
    for (int i = 0; i < n; ++i) {
        cum += dist.probabilities[static_cast<std::size_t>(i)];
        if (u < cum) {
            return dist.r_min + i;
        }
    }
    return dist.r_max; // u landed in the rounding tail of the last bin
}

} // namespace dylora
