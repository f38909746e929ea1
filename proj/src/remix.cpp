#include "hiermil/remix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"

namespace hiermil {

void RemixConfig::validate() const {
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw ConfigError("remix beta range must satisfy 0 < beta_min <= beta_max < 1");
    }
    if (min_bag_size < 1) throw ConfigError("min_bag_size must be >= 1");
    if (tau < 1.0) throw ConfigError("tau must be >= 1");
    if (remix_probability < 0.0 || remix_probability > 1.0) {
        throw ConfigError("remix_probability must be in [0, 1]");
    }
}

double remix_success_prob(std::int64_t n, double alpha, double beta) {
    if (n < 1) throw std::invalid_argument("remix_success_prob: n must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("remix_success_prob: alpha must be in (0, 1]");
    }
    if (!(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("remix_success_prob: beta must be in (0, 1)");
    }
    if (alpha + beta >= 1.0) return 1.0;

    const std::int64_t s = std::llround(alpha * static_cast<double>(n));
    const std::int64_t k = std::llround(beta * static_cast<double>(n));
    if (k > n - s) return 1.0;  // the complementary combination count is zero
    // C(n-s, k) / C(n, k) = prod_{t=0}^{k-1} (n-s-t) / (n-t)
    double keep = 1.0;
    for (std::int64_t t = 0; t < k; ++t) {
        keep *= static_cast<double>(n - s - t) / static_cast<double>(n - t);
    }
    return 1.0 - keep;
}

double mix_ratio(std::int64_t k_i, std::int64_t k_j) {
    if (k_i < 1 || k_j < 1) throw std::invalid_argument("mix_ratio: counts must be >= 1");
    return static_cast<double>(k_i) / static_cast<double>(k_i + k_j);
}

SoftLabel soften_labels(double r, double tau, FineClass class_i, FineClass class_j,
                        const Taxonomy& taxonomy) {
    if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("soften_labels: r must be in (0, 1)");
    if (tau < 1.0) throw std::invalid_argument("soften_labels: tau must be >= 1");
    if (!taxonomy.higher_priority(class_i, class_j)) {
        throw std::invalid_argument(std::string("soften_labels: ") + to_string(class_i) +
                                    " is not strictly higher priority than " +
                                    to_string(class_j));
    }
    const double ri = std::pow(r, 1.0 / tau);
    const double rj = std::pow(1.0 - r, tau);
    const double yi = ri / (ri + rj);
    const double yj = 1.0 - yi;  // sums to 1 exactly

    SoftLabel out;
    out.fine[static_cast<int>(class_i)] = yi;
    out.fine[static_cast<int>(class_j)] = yj;
    const CoarseClass pi = Taxonomy::parent(class_i);
    const CoarseClass pj = Taxonomy::parent(class_j);
    if (pi == pj) {
        out.coarse[static_cast<int>(pi)] = 1.0;
    } else {
        out.coarse[static_cast<int>(pi)] = yi;
        out.coarse[static_cast<int>(pj)] = yj;
    }
    return out;
}

RemixOutcome remix_bags(const Bag& bag_i, const Bag& bag_j, double beta,
                        const Taxonomy& taxonomy, const RemixConfig& config,
                        std::uint64_t seed) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("remix beta must be in (0, 1)");
    const auto n_i = static_cast<std::int64_t>(bag_i.instance_count());
    const auto n_j = static_cast<std::int64_t>(bag_j.instance_count());
    if (n_i < config.min_bag_size) {
        throw SizeError("remix source bag " + bag_i.id + " has " + std::to_string(n_i) +
                        " instances, minimum is " + std::to_string(config.min_bag_size));
    }
    if (bag_i.label == bag_j.label) {
        throw InputError("invalid remix pair: equal labels " +
                         std::string(to_string(bag_i.label)));
    }
    if (!taxonomy.higher_priority(bag_i.label, bag_j.label)) {
        throw InputError(std::string("invalid remix pair: ") + to_string(bag_i.label) +
                         " does not outrank " + to_string(bag_j.label));
    }
    if (bag_i.dim() != bag_j.dim()) throw ShapeError("remix bags have different feature widths");

    std::int64_t k_i = std::llround(beta * static_cast<double>(n_i));
    std::int64_t k_j = std::llround((1.0 - beta) * static_cast<double>(n_j));
    k_i = std::max<std::int64_t>(1, std::min(k_i, n_i));
    k_j = std::max<std::int64_t>(1, std::min(k_j, n_j));

    Rng rng(derive_seed(seed, 0x4E61Full));
    const auto pick_i = rng.sample_without_replacement(n_i, k_i);
    const auto pick_j = rng.sample_without_replacement(n_j, k_j);

    const std::size_t d = bag_i.dim();
    RemixOutcome out;
    out.k_i = k_i;
    out.k_j = k_j;
    out.r = mix_ratio(k_i, k_j);
    out.targets = soften_labels(out.r, config.tau, bag_i.label, bag_j.label, taxonomy);

    out.bag.id = bag_i.id + "+" + bag_j.id;
    out.bag.label = bag_i.label;
    out.bag.subsite = bag_i.subsite;  // the urgent diagnosis governs gating
    out.bag.features = Tensor2(static_cast<std::size_t>(k_i + k_j), d);

    std::vector<std::size_t> rows(static_cast<std::size_t>(k_i + k_j));
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    rng.shuffle(rows);
    std::size_t cursor = 0;
    for (std::size_t src : pick_i) {
        std::memcpy(out.bag.features.data() + rows[cursor++] * d,
                    bag_i.features.data() + src * d, sizeof(double) * d);
    }
    for (std::size_t src : pick_j) {
        std::memcpy(out.bag.features.data() + rows[cursor++] * d,
                    bag_j.features.data() + src * d, sizeof(double) * d);
    }
    return out;
}

std::vector<RemixPair> select_remix_pairs(const Dataset& ds, const Taxonomy& taxonomy,
                                          const RemixConfig& config, std::uint64_t seed,
                                          int epoch) {
    config.validate();
    const auto train = ds.indices_of(Split::Train);
    Rng rng(derive_seed(seed, 0xE90C4ull + static_cast<std::uint64_t>(epoch)));

    std::vector<RemixPair> out;
    std::vector<std::size_t> partners;
    for (std::size_t i : train) {
        const auto& entry = ds.entries[i];
        if (entry.bag.instance_count() < static_cast<std::size_t>(config.min_bag_size)) continue;
        partners.clear();
        for (std::size_t j : train) {
            if (taxonomy.higher_priority(entry.bag.label, ds.entries[j].bag.label)) {
                partners.push_back(j);
            }
        }
        if (partners.empty()) continue;
        if (rng.next_double() < config.remix_probability) {
            const std::size_t j = partners[rng.next_below(partners.size())];
            out.push_back(RemixPair{i, j, rng.uniform(config.beta_min, config.beta_max)});
        }
    }
    return out;
}

}  // namespace hiermil
