#pragma once
// Bag data model, the on-disk bag format and manifest, the stratified split,
// and synthetic generators that stand in for the clinical slide data: each
// bag is mostly shared "background" instances plus a symptomatic fraction
// drawn from a class-specific Gaussian cluster.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hiermil/taxonomy.hpp"
#include "hiermil/tensor.hpp"

namespace hiermil {

struct Bag {
    std::string id;
    Tensor2 features;  // n instances x d dims
    FineClass label = FineClass::TA;
    Subsite subsite = Subsite::Unknown;

    std::size_t instance_count() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

// Per-hierarchy training targets; one-hot for pure samples, softened by remix.
struct SoftLabel {
    std::array<double, kNumCoarse> coarse{};
    std::array<double, kNumFine> fine{};

    static SoftLabel one_hot(FineClass c);
    void validate() const;  // entries >= 0, sums to 1 within 1e-9
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2, TestMixed = 3 };

const char* to_string(Split s);
Split split_from_string(const std::string& name);

// Ground truth attached to generated mixed-symptom bags.
struct MixedInfo {
    FineClass other;      // the lower-priority constituent
    double urgent_frac;   // realized fraction of symptomatic instances that are urgent
};

struct DatasetEntry {
    Bag bag;
    Split split = Split::Train;
    std::optional<MixedInfo> mixed;
};

struct Dataset {
    std::size_t dim = 0;
    std::vector<DatasetEntry> entries;

    std::vector<std::size_t> indices_of(Split s) const;
    std::size_t count_of(Split s) const { return indices_of(s).size(); }
    void validate() const;  // unique ids, constant feature width
};

struct GenConfig {
    int d = 32;
    std::array<int, kNumFine> class_counts = {50, 50, 50, 50, 50, 50, 50};
    double alpha = 0.3;           // symptomatic fraction per bag
    double separation = 6.0;      // distance of class centroids from background
    int bag_min = 150;
    int bag_max = 300;
    std::array<double, 3> split_ratios = {0.7, 0.15, 0.15};

    // Mixed-symptom test set: bags drawn for each priority-ordered class pair
    // (all 21 pairs when `mixed_pairs` is empty), with the urgent class
    // occupying a minority of the symptomatic area.
    int mixed_pairs_per_combo = 5;
    double mixed_frac_min = 0.1;
    double mixed_frac_max = 0.5;
    std::vector<std::pair<FineClass, FineClass>> mixed_pairs;

    void validate() const;
};

// Single-symptom bags, all tagged Train until split_dataset() re-tags them.
// Deterministic given seed. Features are quantized to float32 resolution so
// that saving and reloading a dataset is lossless.
Dataset generate_synthetic(const GenConfig& config, std::uint64_t seed);

// Two-symptom bags tagged TestMixed; the label is the priority winner.
Dataset generate_mixed_test(const GenConfig& config, const Taxonomy& taxonomy,
                            std::uint64_t seed);

// Stratified per fine class with largest-remainder rounding (ties go to the
// earlier split in train, val, test order). Throws when a class present in
// the dataset has fewer than 3 bags.
void split_dataset(Dataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed);

// Binary bag format, little-endian:
//   magic "HMB1" | version u16=1 | label u8 | subsite u8 | n u32 | d u32 |
//   n*d float32, row-major.
void write_bag(const Bag& bag, const std::filesystem::path& path);
Bag read_bag(const std::filesystem::path& path);

// Writes bags under dir/bags/ plus dir/manifest.jsonl (one JSON object per
// line: id, path, label, subsite, split, and mix_other/mix_frac for mixed
// bags). load_dataset() reads the same layout back.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hiermil
