#pragma once
// Implicit feature remix: synthesize training bags by concatenating a
// beta-proportion of a higher-priority bag with the complementary proportion
// of a lower-priority one, then soften the labels so the urgent class
// dominates. remix_success_prob() is the exact probability that at least one
// symptomatic instance of the urgent bag survives the subsampling.

#include <cstdint>
#include <vector>

#include "hiermil/data.hpp"
#include "hiermil/taxonomy.hpp"

namespace hiermil {

struct RemixConfig {
    double beta_min = 0.4;
    double beta_max = 0.8;
    int min_bag_size = 150;
    double tau = 15.0;
    // Fraction of eligible training samples remixed per epoch; a remixed
    // sample replaces its higher-priority source for that epoch.
    double remix_probability = 0.3;

    void validate() const;
};

// P(at least one of the round(n*alpha) symptomatic instances is drawn when
// sampling round(n*beta) of n without replacement). Exactly 1 when
// alpha + beta >= 1. Computed as a product of per-draw survival ratios, which
// is exact up to rounding (every factor is in (0, 1]).
double remix_success_prob(std::int64_t n, double alpha, double beta);

// r = k_i / (k_i + k_j) from realized instance counts.
double mix_ratio(std::int64_t k_i, std::int64_t k_j);

// Two-class soft target with r_i' = r^(1/tau), r_j' = (1-r)^tau; the exponent
// asymmetry is what makes the higher-priority class dominate. class_i must be
// strictly higher priority than class_j. Coarse targets reuse the same pair
// weights on the parents, collapsing to one-hot when the parents coincide.
SoftLabel soften_labels(double r, double tau, FineClass class_i, FineClass class_j,
                        const Taxonomy& taxonomy);

struct RemixOutcome {
    Bag bag;
    SoftLabel targets;
    double r = 0.0;
    std::int64_t k_i = 0;
    std::int64_t k_j = 0;
};

RemixOutcome remix_bags(const Bag& bag_i, const Bag& bag_j, double beta,
                        const Taxonomy& taxonomy, const RemixConfig& config,
                        std::uint64_t seed);

struct RemixPair {
    std::size_t i;  // dataset entry index of the higher-priority bag
    std::size_t j;  // partner with strictly lower priority
    double beta;
};

// Deterministic per (seed, epoch). Eligible samples are train bags of at
// least min_bag_size instances for which a strictly-lower-priority train bag
// exists; each is remixed with probability remix_probability against a
// uniformly drawn partner.
std::vector<RemixPair> select_remix_pairs(const Dataset& ds, const Taxonomy& taxonomy,
                                          const RemixConfig& config, std::uint64_t seed,
                                          int epoch);

}  // namespace hiermil
