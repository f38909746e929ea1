#include "hiermil/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"

namespace hiermil {

namespace {

constexpr char kBagMagic[4] = {'H', 'M', 'B', '1'};
constexpr std::uint16_t kBagVersion = 1;

constexpr const char* kSplitNames[4] = {"train", "val", "test", "test-mixed"};

double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

// Class centroids: axis-aligned when the feature space has room for one axis
// per class, otherwise seeded random unit directions. Background sits at the
// origin with unit noise, so `separation` is in units of the noise sigma.
std::vector<std::vector<double>> class_centroids(int d, double separation, std::uint64_t seed) {
    std::vector<std::vector<double>> centroids(kNumFine, std::vector<double>(d, 0.0));
    if (d >= kNumFine) {
        for (int c = 0; c < kNumFine; ++c) centroids[c][c] = separation;
    } else {
        Rng rng(derive_seed(seed, 0xCE27801Dull));
        for (int c = 0; c < kNumFine; ++c) {
            double norm2 = 0.0;
            for (int k = 0; k < d; ++k) {
                centroids[c][k] = rng.next_normal();
                norm2 += centroids[c][k] * centroids[c][k];
            }
            const double inv = separation / std::sqrt(norm2);
            for (int k = 0; k < d; ++k) centroids[c][k] *= inv;
        }
    }
    return centroids;
}

Subsite draw_subsite(FineClass label, Rng& rng) {
    // Subsite is informative only for the serrated pair: SSL skews proximal,
    // HP skews distal, everything else is Unknown.
    if (label == FineClass::SSL) {
        return rng.next_double() < 0.8 ? Subsite::Proximal : Subsite::Unknown;
    }
    if (label == FineClass::HP) {
        return rng.next_double() < 0.8 ? Subsite::Distal : Subsite::Unknown;
    }
    return Subsite::Unknown;
}

void fill_instance(double* row, int d, const std::vector<double>* centroid, Rng& rng) {
    for (int k = 0; k < d; ++k) {
        const double mu = centroid ? (*centroid)[k] : 0.0;
        row[k] = quantize_f32(mu + rng.next_normal());
    }
}

std::string bag_id(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%04d", prefix, index);
    return buf;
}

// Little-endian scalar packing so the format is identical across hosts.
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) throw FormatError(std::string("truncated ") + what, buf.size());
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

SoftLabel SoftLabel::one_hot(FineClass c) {
    SoftLabel l;
    l.fine[static_cast<int>(c)] = 1.0;
    l.coarse[static_cast<int>(Taxonomy::parent(c))] = 1.0;
    return l;
}

void SoftLabel::validate() const {
    auto check = [](const double* v, int n, const char* what) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            if (v[i] < 0.0) throw InputError(std::string(what) + " target entry negative");
            s += v[i];
        }
        if (std::abs(s - 1.0) > 1e-9) {
            throw InputError(std::string(what) + " target does not sum to 1");
        }
    };
    check(coarse.data(), kNumCoarse, "coarse");
    check(fine.data(), kNumFine, "fine");
}

const char* to_string(Split s) { return kSplitNames[static_cast<int>(s)]; }

Split split_from_string(const std::string& name) {
    for (int i = 0; i < 4; ++i) {
        if (name == kSplitNames[i]) return static_cast<Split>(i);
    }
    throw InputError("unknown split: " + name);
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == s) out.push_back(i);
    }
    return out;
}

void Dataset::validate() const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (!ids.insert(e.bag.id).second) throw InputError("duplicate bag id: " + e.bag.id);
        if (e.bag.dim() != dim) {
            throw InputError("bag " + e.bag.id + " has feature width " +
                             std::to_string(e.bag.dim()) + ", dataset dim is " +
                             std::to_string(dim));
        }
        if (e.bag.instance_count() == 0) throw InputError("bag " + e.bag.id + " is empty");
    }
}

void GenConfig::validate() const {
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("alpha must be in (0, 1]");
    if (d < 2) throw ConfigError("feature dimension must be >= 2");
    if (bag_min < 1 || bag_max < bag_min) throw ConfigError("invalid bag size range");
    bool any = false;
    for (int c : class_counts) {
        if (c < 0) throw ConfigError("negative class count");
        any = any || c > 0;
    }
    if (!any) throw ConfigError("all class counts are zero");
    if (mixed_pairs_per_combo < 0) throw ConfigError("negative mixed pair count");
    if (!(mixed_frac_min > 0.0 && mixed_frac_min <= mixed_frac_max && mixed_frac_max < 1.0)) {
        throw ConfigError("mixed fraction range must satisfy 0 < min <= max < 1");
    }
    for (const auto& [a, b] : mixed_pairs) {
        if (a == b) {
            throw ConfigError(std::string("degenerate mixed pair (") + to_string(a) + ", " +
                              to_string(b) + ")");
        }
    }
}

Dataset generate_synthetic(const GenConfig& config, std::uint64_t seed) {
    config.validate();
    const auto centroids = class_centroids(config.d, config.separation, seed);

    Dataset ds;
    ds.dim = static_cast<std::size_t>(config.d);
    std::uint64_t bag_index = 0;
    for (int c = 0; c < kNumFine; ++c) {
        const auto label = static_cast<FineClass>(c);
        for (int k = 0; k < config.class_counts[c]; ++k, ++bag_index) {
            Rng rng(derive_seed(seed, bag_index));
            const int n = config.bag_min +
                          static_cast<int>(rng.next_below(
                              static_cast<std::uint64_t>(config.bag_max - config.bag_min + 1)));
            const int n_sym = static_cast<int>(std::ceil(config.alpha * n));

            Bag bag;
            bag.id = bag_id(to_string(label), k);
            bag.label = label;
            bag.features = Tensor2(n, config.d);
            for (int i = 0; i < n; ++i) {
                const bool symptomatic = i < n_sym;
                fill_instance(bag.features.data() + static_cast<std::size_t>(i) * config.d,
                              config.d, symptomatic ? &centroids[c] : nullptr, rng);
            }
            // Shuffle instance rows so symptomatic ones are not positional.
            {
                std::vector<std::size_t> order(n);
                for (int i = 0; i < n; ++i) order[i] = i;
                rng.shuffle(order);
                Tensor2 shuffled(n, config.d);
                for (int i = 0; i < n; ++i) {
                    std::memcpy(shuffled.data() + static_cast<std::size_t>(i) * config.d,
                                bag.features.data() + order[i] * config.d,
                                sizeof(double) * config.d);
                }
                bag.features = std::move(shuffled);
            }
            bag.subsite = draw_subsite(label, rng);
            ds.entries.push_back(DatasetEntry{std::move(bag), Split::Train, std::nullopt});
        }
    }
    ds.validate();
    return ds;
}

Dataset generate_mixed_test(const GenConfig& config, const Taxonomy& taxonomy,
                            std::uint64_t seed) {
    config.validate();
    const auto centroids = class_centroids(config.d, config.separation, seed);

    std::vector<std::pair<FineClass, FineClass>> pairs = config.mixed_pairs;
    if (pairs.empty()) {
        for (int i = 0; i < kNumFine; ++i) {
            for (int j = 0; j < kNumFine; ++j) {
                const auto a = static_cast<FineClass>(i);
                const auto b = static_cast<FineClass>(j);
                if (taxonomy.higher_priority(a, b)) pairs.emplace_back(a, b);
            }
        }
    }

    Dataset ds;
    ds.dim = static_cast<std::size_t>(config.d);
    std::uint64_t bag_index = 0;
    int serial = 0;
    for (const auto& [a, b] : pairs) {
        const FineClass urgent = taxonomy.higher_priority(a, b) ? a : b;
        const FineClass other = urgent == a ? b : a;
        for (int k = 0; k < config.mixed_pairs_per_combo; ++k, ++bag_index, ++serial) {
            Rng rng(derive_seed(seed, 0x30C0FFEEull + bag_index));
            const int n = config.bag_min +
                          static_cast<int>(rng.next_below(
                              static_cast<std::uint64_t>(config.bag_max - config.bag_min + 1)));
            const int m = static_cast<int>(std::ceil(config.alpha * n));
            const double f = rng.uniform(config.mixed_frac_min, config.mixed_frac_max);
            // Both constituents contribute at least one symptomatic instance.
            int k_urgent = static_cast<int>(std::lround(f * m));
            k_urgent = std::clamp(k_urgent, 1, m - 1);
            const int k_other = m - k_urgent;

            Bag bag;
            bag.id = std::string("mx-") + to_string(urgent) + "-" + to_string(other) + "-" +
                     bag_id("", serial).substr(1);
            bag.label = urgent;
            bag.features = Tensor2(n, config.d);
            for (int i = 0; i < n; ++i) {
                const std::vector<double>* centroid = nullptr;
                if (i < k_urgent) {
                    centroid = &centroids[static_cast<int>(urgent)];
                } else if (i < k_urgent + k_other) {
                    centroid = &centroids[static_cast<int>(other)];
                }
                fill_instance(bag.features.data() + static_cast<std::size_t>(i) * config.d,
                              config.d, centroid, rng);
            }
            {
                std::vector<std::size_t> order(n);
                for (int i = 0; i < n; ++i) order[i] = i;
                rng.shuffle(order);
                Tensor2 shuffled(n, config.d);
                for (int i = 0; i < n; ++i) {
                    std::memcpy(shuffled.data() + static_cast<std::size_t>(i) * config.d,
                                bag.features.data() + order[i] * config.d,
                                sizeof(double) * config.d);
                }
                bag.features = std::move(shuffled);
            }
            bag.subsite = draw_subsite(urgent, rng);
            const double realized = static_cast<double>(k_urgent) / static_cast<double>(m);
            ds.entries.push_back(
                DatasetEntry{std::move(bag), Split::TestMixed, MixedInfo{other, realized}});
        }
    }
    ds.validate();
    return ds;
}

void split_dataset(Dataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
    double total = 0.0;
    for (double r : ratios) {
        if (r <= 0.0) throw ConfigError("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    for (int c = 0; c < kNumFine; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.entries.size(); ++i) {
            if (ds.entries[i].split != Split::TestMixed &&
                ds.entries[i].bag.label == static_cast<FineClass>(c)) {
                idx.push_back(i);
            }
        }
        if (idx.empty()) continue;
        if (idx.size() < 3) {
            throw InputError(std::string("stratification requires >= 3 bags of class ") +
                             to_string(static_cast<FineClass>(c)) + ", have " +
                             std::to_string(idx.size()));
        }
        Rng rng(derive_seed(seed, 0x5411Dull + static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);

        // Largest-remainder apportionment; ties go to the earlier split.
        const std::size_t n = idx.size();
        std::array<std::size_t, 3> take{};
        std::array<double, 3> remainder{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            const double ideal = ratios[s] * static_cast<double>(n);
            take[s] = static_cast<std::size_t>(std::floor(ideal));
            remainder[s] = ideal - std::floor(ideal);
            assigned += take[s];
        }
        while (assigned < n) {
            int best = 0;
            for (int s = 1; s < 3; ++s) {
                if (remainder[s] > remainder[best]) best = s;
            }
            ++take[best];
            remainder[best] = -1.0;
            ++assigned;
        }

        std::size_t pos = 0;
        for (int s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < take[s]; ++k, ++pos) {
                ds.entries[idx[pos]].split = static_cast<Split>(s);
            }
        }
    }
}

void write_bag(const Bag& bag, const std::filesystem::path& path) {
    if (bag.instance_count() == 0) throw InputError("refusing to write empty bag " + bag.id);
    if (!bag.features.all_finite()) {
        throw InputError("refusing to write non-finite features in bag " + bag.id);
    }
    std::string out;
    out.reserve(16 + bag.features.size() * 4);
    out.append(kBagMagic, 4);
    put_u16(out, kBagVersion);
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(bag.label)));
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(bag.subsite)));
    put_u32(out, static_cast<std::uint32_t>(bag.instance_count()));
    put_u32(out, static_cast<std::uint32_t>(bag.dim()));
    for (std::size_t i = 0; i < bag.features.size(); ++i) {
        put_f32(out, static_cast<float>(bag.features.data()[i]));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("short write: " + path.string());
}

Bag read_bag(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open bag file: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    Reader r{buf};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kBagMagic, 4) != 0) {
        throw FormatError("bad magic in " + path.string(), 0);
    }
    r.pos = 4;
    const std::uint16_t version = r.u16("version");
    if (version != kBagVersion) {
        throw FormatError("unsupported bag version " + std::to_string(version), 4);
    }
    const std::uint8_t label_code = r.u8("label");
    if (label_code >= kNumFine) throw FormatError("label code out of range", 6);
    const std::uint8_t subsite_code = r.u8("subsite");
    if (subsite_code > 2) throw FormatError("subsite code out of range", 7);
    const std::uint32_t n = r.u32("instance count");
    const std::uint32_t d = r.u32("feature dim");
    if (n == 0 || d == 0) throw FormatError("empty bag dimensions", 8);
    const std::uint64_t cells = static_cast<std::uint64_t>(n) * d;
    if (cells > (std::size_t{1} << 32)) throw FormatError("n*d overflows sane payload size", 8);
    const std::uint64_t payload = cells * 4;
    if (r.pos + payload > buf.size()) {
        throw FormatError("payload truncated: expected " + std::to_string(payload) + " bytes",
                          buf.size());
    }

    Bag bag;
    bag.id = path.stem().string();
    bag.label = static_cast<FineClass>(label_code);
    bag.subsite = static_cast<Subsite>(subsite_code);
    bag.features = Tensor2(n, d);
    for (std::uint64_t i = 0; i < cells; ++i) {
        bag.features.data()[i] = static_cast<double>(r.f32("payload"));
    }
    if (!bag.features.all_finite()) {
        throw FormatError("non-finite feature in " + path.string(), 16);
    }
    return bag;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir / "bags");
    std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw InputError("cannot write manifest in " + dir.string());
    for (const auto& e : ds.entries) {
        const std::string rel = "bags/" + e.bag.id + ".bag";
        write_bag(e.bag, dir / rel);
        nlohmann::json line{
            {"id", e.bag.id},
            {"path", rel},
            {"label", to_string(e.bag.label)},
            {"subsite", to_string(e.bag.subsite)},
            {"split", to_string(e.split)},
        };
        if (e.mixed) {
            line["mix_other"] = to_string(e.mixed->other);
            line["mix_frac"] = e.mixed->urgent_frac;
        }
        manifest << line.dump() << "\n";
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.jsonl");
    if (!manifest) throw InputError("missing manifest.jsonl in " + dir.string());
    Dataset ds;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError("malformed manifest line", 0);
        DatasetEntry e;
        e.bag = read_bag(dir / j.at("path").get<std::string>());
        e.bag.id = j.at("id").get<std::string>();
        const auto label = fine_from_string(j.at("label").get<std::string>());
        if (label != e.bag.label) {
            throw InputError("manifest label disagrees with bag file for " + e.bag.id);
        }
        e.split = split_from_string(j.at("split").get<std::string>());
        if (j.contains("mix_other")) {
            e.mixed = MixedInfo{fine_from_string(j.at("mix_other").get<std::string>()),
                                j.at("mix_frac").get<double>()};
        }
        if (ds.entries.empty()) ds.dim = e.bag.dim();
        ds.entries.push_back(std::move(e));
    }
    if (ds.entries.empty()) throw InputError("manifest is empty in " + dir.string());
    ds.validate();
    return ds;
}

}  // namespace hiermil
