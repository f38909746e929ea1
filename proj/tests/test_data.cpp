#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "hiermil/data.hpp"
#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"

using namespace hiermil;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / "hiermil-tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

GenConfig small_config() {
    GenConfig c;
    c.class_counts = {10, 10, 10, 10, 10, 10, 10};
    c.bag_min = 150;
    c.bag_max = 300;
    return c;
}

// Independent oracle: classify a bag by the nearest class centroid to its
// mean feature vector (axis-aligned centroids at `separation`).
FineClass nearest_centroid(const Bag& bag, double separation) {
    const std::size_t d = bag.dim();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < bag.instance_count(); ++i) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += bag.features.at(i, k);
    }
    for (double& v : mean) v /= static_cast<double>(bag.instance_count());
    int best = 0;
    double best_d2 = 1e300;
    for (int c = 0; c < kNumFine; ++c) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double target = (k == static_cast<std::size_t>(c)) ? separation : 0.0;
            d2 += (mean[k] - target) * (mean[k] - target);
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = c;
        }
    }
    return static_cast<FineClass>(best);
}

}  // namespace

TEST_CASE("generator construction contract") {
    GenConfig c = small_config();
    const Dataset ds = generate_synthetic(c, 1);
    CHECK(ds.entries.size() == 70);
    CHECK(ds.dim == 32);
    for (const auto& e : ds.entries) {
        CHECK(e.bag.instance_count() >= 150);
        CHECK(e.bag.instance_count() <= 300);
        CHECK(e.bag.features.all_finite());
    }
}

TEST_CASE("generator determinism: same seed, identical bytes") {
    GenConfig c = small_config();
    const Dataset a = generate_synthetic(c, 7);
    const Dataset b = generate_synthetic(c, 7);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        const auto& x = a.entries[i].bag;
        const auto& y = b.entries[i].bag;
        CHECK(x.id == y.id);
        CHECK(x.subsite == y.subsite);
        REQUIRE(x.features.size() == y.features.size());
        CHECK(std::memcmp(x.features.data(), y.features.data(), x.features.size() * 8) == 0);
    }
    const Dataset other = generate_synthetic(c, 8);
    CHECK(std::memcmp(a.entries[0].bag.features.data(), other.entries[0].bag.features.data(),
                      std::min(a.entries[0].bag.features.size(),
                               other.entries[0].bag.features.size()) *
                          8) != 0);
}

TEST_CASE("generator config errors") {
    GenConfig c = small_config();
    c.alpha = 0.0;
    CHECK_THROWS_AS(generate_synthetic(c, 0), ConfigError);
    c = small_config();
    c.alpha = 1.5;
    CHECK_THROWS_AS(generate_synthetic(c, 0), ConfigError);
    c = small_config();
    c.d = 1;
    CHECK_THROWS_AS(generate_synthetic(c, 0), ConfigError);
    c = small_config();
    c.class_counts = {0, 0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(generate_synthetic(c, 0), ConfigError);
}

TEST_CASE("alpha=1 bags are fully symptomatic: nearest-centroid oracle is perfect") {
    GenConfig c = small_config();
    c.alpha = 1.0;
    c.class_counts = {50, 50, 50, 50, 50, 50, 50};
    c.bag_min = 20;  // smaller bags keep this subsecond
    c.bag_max = 40;
    const Dataset ds = generate_synthetic(c, 3);
    CHECK(ds.entries.size() == 350);
    for (const auto& e : ds.entries) {
        CHECK(nearest_centroid(e.bag, c.separation) == e.bag.label);
    }
}

TEST_CASE("symptomatic mean converges to the class centroid") {
    GenConfig c = small_config();
    c.alpha = 1.0;  // every instance symptomatic in this probe bag
    c.class_counts = {1, 0, 0, 0, 0, 0, 0};
    c.bag_min = 4000;
    c.bag_max = 4000;
    const Dataset ds = generate_synthetic(c, 5);
    const Bag& bag = ds.entries[0].bag;
    const double n = static_cast<double>(bag.instance_count());
    for (std::size_t k = 0; k < bag.dim(); ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < bag.instance_count(); ++i) mean += bag.features.at(i, k);
        mean /= n;
        const double target = k == 0 ? c.separation : 0.0;
        CHECK(std::abs(mean - target) < 4.0 / std::sqrt(n));
    }
}

TEST_CASE("subsite correlates with the serrated classes only") {
    GenConfig c = small_config();
    c.class_counts = {40, 0, 0, 40, 40, 0, 40};
    const Dataset ds = generate_synthetic(c, 11);
    int ssl_proximal = 0, ssl_total = 0, hp_distal = 0, hp_total = 0;
    for (const auto& e : ds.entries) {
        switch (e.bag.label) {
            case FineClass::SSL:
                ++ssl_total;
                ssl_proximal += e.bag.subsite == Subsite::Proximal;
                CHECK(e.bag.subsite != Subsite::Distal);
                break;
            case FineClass::HP:
                ++hp_total;
                hp_distal += e.bag.subsite == Subsite::Distal;
                CHECK(e.bag.subsite != Subsite::Proximal);
                break;
            default:
                CHECK(e.bag.subsite == Subsite::Unknown);
        }
    }
    // 0.8 rate with 40 draws: expect roughly 32, allow wide slack
    CHECK(ssl_proximal > ssl_total / 2);
    CHECK(hp_distal > hp_total / 2);
}

TEST_CASE("mixed test bags carry metadata and a priority-winner label") {
    GenConfig c = small_config();
    c.mixed_pairs_per_combo = 3;
    const Taxonomy tax;
    const Dataset ds = generate_mixed_test(c, tax, 2);
    CHECK(ds.entries.size() == 21 * 3);  // all ordered priority pairs
    for (const auto& e : ds.entries) {
        REQUIRE(e.mixed.has_value());
        CHECK(e.split == Split::TestMixed);
        CHECK(tax.higher_priority(e.bag.label, e.mixed->other));
        CHECK(e.mixed->urgent_frac > 0.0);
        CHECK(e.mixed->urgent_frac <= 0.5 + 1e-9);
    }
}

TEST_CASE("explicit mixed pairs: label is the priority winner; X,X rejected") {
    GenConfig c = small_config();
    c.mixed_pairs_per_combo = 2;
    c.mixed_pairs = {{FineClass::HP, FineClass::IP}, {FineClass::TA, FineClass::HP}};
    const Taxonomy tax;
    const Dataset ds = generate_mixed_test(c, tax, 2);
    CHECK(ds.entries.size() == 4);
    CHECK(ds.entries[0].bag.label == FineClass::HP);  // HP outranks IP
    CHECK(ds.entries[2].bag.label == FineClass::TA);  // TA outranks HP

    c.mixed_pairs = {{FineClass::HP, FineClass::HP}};
    CHECK_THROWS_AS(generate_mixed_test(c, tax, 2), ConfigError);
}

TEST_CASE("mixed bags: both constituents contribute at least one instance") {
    GenConfig c = small_config();
    c.mixed_pairs_per_combo = 4;
    c.mixed_frac_min = 0.01;  // stress the clamping
    c.mixed_frac_max = 0.02;
    const Dataset ds = generate_mixed_test(c, Taxonomy{}, 9);
    for (const auto& e : ds.entries) {
        const double m = std::ceil(c.alpha * static_cast<double>(e.bag.instance_count()));
        const double urgent = e.mixed->urgent_frac * m;
        CHECK(urgent >= 0.999);
        CHECK(m - urgent >= 0.999);
    }
}

TEST_CASE("stratified split: exact ratios and largest-remainder rounding") {
    {
        GenConfig c = small_config();
        c.class_counts = {100, 0, 0, 0, 0, 0, 0};
        c.bag_min = 5;
        c.bag_max = 10;
        Dataset ds = generate_synthetic(c, 0);
        split_dataset(ds, {0.7, 0.15, 0.15}, 0);
        CHECK(ds.count_of(Split::Train) == 70);
        CHECK(ds.count_of(Split::Val) == 15);
        CHECK(ds.count_of(Split::Test) == 15);
    }
    {
        GenConfig c = small_config();
        c.class_counts = {10, 0, 0, 0, 0, 0, 0};
        c.bag_min = 5;
        c.bag_max = 10;
        Dataset ds = generate_synthetic(c, 0);
        split_dataset(ds, {0.7, 0.15, 0.15}, 0);
        // 10 * 0.15 = 1.5 on both val and test; the tie goes to the earlier split
        CHECK(ds.count_of(Split::Train) == 7);
        CHECK(ds.count_of(Split::Val) == 2);
        CHECK(ds.count_of(Split::Test) == 1);
    }
}

TEST_CASE("split preserves per-class totals and is deterministic") {
    GenConfig c = small_config();
    c.bag_min = 5;
    c.bag_max = 10;
    Dataset a = generate_synthetic(c, 4);
    Dataset b = generate_synthetic(c, 4);
    split_dataset(a, {0.7, 0.15, 0.15}, 21);
    split_dataset(b, {0.7, 0.15, 0.15}, 21);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].split == b.entries[i].split);
    }
    // partition property: per-class counts survive the split
    for (int cls = 0; cls < kNumFine; ++cls) {
        int total = 0;
        for (const auto& e : a.entries) {
            if (e.bag.label == static_cast<FineClass>(cls)) ++total;
        }
        CHECK(total == 10);
    }
}

TEST_CASE("split errors") {
    GenConfig c = small_config();
    c.bag_min = 5;
    c.bag_max = 10;
    Dataset ds = generate_synthetic(c, 0);
    CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.25, 0.3}, 0), ConfigError);   // sums to 1.05
    CHECK_THROWS_AS(split_dataset(ds, {1.0, -0.5, 0.5}, 0), ConfigError);  // negative

    c.class_counts = {2, 10, 10, 10, 10, 10, 10};  // TA has too few bags
    Dataset tiny = generate_synthetic(c, 0);
    CHECK_THROWS_AS(split_dataset(tiny, {0.7, 0.15, 0.15}, 0), InputError);
}

TEST_CASE("bag file round trip is bit-exact") {
    const auto dir = temp_dir("bagio");
    Bag bag;
    bag.id = "probe";
    bag.label = FineClass::SSL;
    bag.subsite = Subsite::Proximal;
    bag.features = Tensor2(3, 4);
    Rng rng(13);
    for (std::size_t i = 0; i < bag.features.size(); ++i) {
        // float32-representable values, as the generator produces
        bag.features.data()[i] = static_cast<double>(static_cast<float>(rng.uniform(-5, 5)));
    }
    write_bag(bag, dir / "probe.bag");
    const Bag back = read_bag(dir / "probe.bag");
    CHECK(back.id == "probe");
    CHECK(back.label == FineClass::SSL);
    CHECK(back.subsite == Subsite::Proximal);
    REQUIRE(back.features.rows() == 3);
    REQUIRE(back.features.cols() == 4);
    CHECK(std::memcmp(back.features.data(), bag.features.data(), bag.features.size() * 8) == 0);
}

TEST_CASE("bag format errors carry byte offsets") {
    const auto dir = temp_dir("bagfmt");
    {
        std::ofstream f(dir / "badmagic.bag", std::ios::binary);
        f << "XXXXrest-of-the-file-is-irrelevant";
    }
    try {
        read_bag(dir / "badmagic.bag");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }

    // header says 5x4 floats (80 bytes) but the payload holds 79
    Bag bag;
    bag.id = "trunc";
    bag.features = Tensor2(5, 4);
    for (std::size_t i = 0; i < bag.features.size(); ++i) bag.features.data()[i] = 1.0;
    write_bag(bag, dir / "trunc.bag");
    {
        std::error_code ec;
        std::filesystem::resize_file(dir / "trunc.bag", 16 + 79, ec);
        REQUIRE(!ec);
    }
    try {
        read_bag(dir / "trunc.bag");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 16 + 79);
    }

    CHECK_THROWS_AS(read_bag(dir / "missing.bag"), InputError);
}

TEST_CASE("dataset save/load round trip") {
    const auto dir = temp_dir("dataset");
    GenConfig c = small_config();
    c.class_counts = {4, 4, 4, 4, 4, 4, 4};
    c.bag_min = 5;
    c.bag_max = 9;
    c.mixed_pairs_per_combo = 1;
    Dataset ds = generate_synthetic(c, 6);
    split_dataset(ds, {0.7, 0.15, 0.15}, 6);
    Dataset mixed = generate_mixed_test(c, Taxonomy{}, 6);
    for (auto& e : mixed.entries) ds.entries.push_back(std::move(e));

    save_dataset(ds, dir);
    const Dataset back = load_dataset(dir);
    REQUIRE(back.entries.size() == ds.entries.size());
    CHECK(back.dim == ds.dim);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        const auto& x = ds.entries[i];
        const auto& y = back.entries[i];
        CHECK(x.bag.id == y.bag.id);
        CHECK(x.bag.label == y.bag.label);
        CHECK(x.bag.subsite == y.bag.subsite);
        CHECK(x.split == y.split);
        CHECK(x.mixed.has_value() == y.mixed.has_value());
        if (x.mixed) {
            CHECK(x.mixed->other == y.mixed->other);
            CHECK(x.mixed->urgent_frac == doctest::Approx(y.mixed->urgent_frac));
        }
        CHECK(std::memcmp(x.bag.features.data(), y.bag.features.data(),
                          x.bag.features.size() * 8) == 0);
    }
}

TEST_CASE("soft label validation") {
    SoftLabel l = SoftLabel::one_hot(FineClass::TSA);
    CHECK(l.fine[2] == 1.0);
    CHECK(l.coarse[0] == 1.0);  // TSA is an Adenoma
    CHECK_NOTHROW(l.validate());
    l.fine[0] = 0.5;
    CHECK_THROWS_AS(l.validate(), InputError);
}
