#include "hiermil/taxonomy.hpp"

#include <algorithm>

#include "hiermil/errors.hpp"

namespace hiermil {

namespace {

constexpr std::array<CoarseClass, kNumFine> kParent = {
    CoarseClass::Adenoma,   // TA
    CoarseClass::Adenoma,   // TVA
    CoarseClass::Adenoma,   // TSA
    CoarseClass::Serrated,  // HP
    CoarseClass::Serrated,  // SSL
    CoarseClass::Others,    // IP
    CoarseClass::Others,    // LP
};

constexpr const char* kFineNames[kNumFine] = {"TA", "TVA", "TSA", "HP", "SSL", "IP", "LP"};
constexpr const char* kCoarseNames[kNumCoarse] = {"Adenoma", "Serrated", "Others"};
constexpr const char* kSubsiteNames[3] = {"Proximal", "Distal", "Unknown"};

}  // namespace

const char* to_string(FineClass c) { return kFineNames[static_cast<int>(c)]; }
const char* to_string(CoarseClass c) { return kCoarseNames[static_cast<int>(c)]; }
const char* to_string(Subsite s) { return kSubsiteNames[static_cast<int>(s)]; }

FineClass fine_from_string(const std::string& name) {
    for (int i = 0; i < kNumFine; ++i) {
        if (name == kFineNames[i]) return static_cast<FineClass>(i);
    }
    throw InputError("unknown fine class: " + name);
}

CoarseClass coarse_from_string(const std::string& name) {
    for (int i = 0; i < kNumCoarse; ++i) {
        if (name == kCoarseNames[i]) return static_cast<CoarseClass>(i);
    }
    throw InputError("unknown coarse class: " + name);
}

Subsite subsite_from_string(const std::string& name) {
    for (int i = 0; i < 3; ++i) {
        if (name == kSubsiteNames[i]) return static_cast<Subsite>(i);
    }
    throw InputError("unknown subsite: " + name);
}

std::array<double, 3> subsite_one_hot(Subsite s) {
    std::array<double, 3> v{0.0, 0.0, 0.0};
    v[static_cast<int>(s)] = 1.0;
    return v;
}

Taxonomy::Taxonomy() {
    // Most to least urgent; SSL ahead of HP because SSL is the pre-malignant
    // serrated lesion the follow-up distinguishes from HP.
    fine_rank_ = {0, 1, 2, 4, 3, 5, 6};  // TA, TVA, TSA, HP, SSL, IP, LP
    coarse_rank_ = {0, 1, 2};
    validate();
}

Taxonomy::Taxonomy(const std::array<int, kNumFine>& fine_priority,
                   const std::array<int, kNumCoarse>& coarse_priority)
    : fine_rank_(fine_priority), coarse_rank_(coarse_priority) {
    validate();
}

void Taxonomy::validate() const {
    auto is_permutation = [](const int* ranks, int n) {
        std::vector<bool> seen(n, false);
        for (int i = 0; i < n; ++i) {
            if (ranks[i] < 0 || ranks[i] >= n || seen[ranks[i]]) return false;
            seen[ranks[i]] = true;
        }
        return true;
    };
    if (!is_permutation(fine_rank_.data(), kNumFine)) {
        throw ConfigError("fine priority ranks must be a permutation of 0..6");
    }
    if (!is_permutation(coarse_rank_.data(), kNumCoarse)) {
        throw ConfigError("coarse priority ranks must be a permutation of 0..2");
    }
    if (!(coarse_rank(CoarseClass::Adenoma) < coarse_rank(CoarseClass::Serrated) &&
          coarse_rank(CoarseClass::Serrated) < coarse_rank(CoarseClass::Others))) {
        throw ConfigError("coarse priority must order Adenoma < Serrated < Others");
    }
    for (int i = 0; i < kNumFine; ++i) {
        for (int j = 0; j < kNumFine; ++j) {
            const auto a = static_cast<FineClass>(i);
            const auto b = static_cast<FineClass>(j);
            if (coarse_rank(parent(a)) < coarse_rank(parent(b)) &&
                !(fine_rank(a) < fine_rank(b))) {
                throw ConfigError("fine priority inconsistent with coarse priority between " +
                                  std::string(to_string(a)) + " and " + to_string(b));
            }
        }
    }
}

CoarseClass Taxonomy::parent(FineClass c) { return kParent[static_cast<int>(c)]; }

std::vector<FineClass> Taxonomy::children(CoarseClass c) {
    std::vector<FineClass> out;
    for (int i = 0; i < kNumFine; ++i) {
        if (kParent[i] == c) out.push_back(static_cast<FineClass>(i));
    }
    return out;
}

bool Taxonomy::higher_priority(ClassRef a, ClassRef b) const {
    if (a.level != b.level) {
        throw std::invalid_argument("priority comparison across hierarchy levels");
    }
    const int n = a.level == Level::Fine ? kNumFine : kNumCoarse;
    if (a.code < 0 || a.code >= n || b.code < 0 || b.code >= n) {
        throw std::invalid_argument("class code out of range for level");
    }
    if (a.level == Level::Fine) {
        return higher_priority(static_cast<FineClass>(a.code), static_cast<FineClass>(b.code));
    }
    return higher_priority(static_cast<CoarseClass>(a.code), static_cast<CoarseClass>(b.code));
}

}  // namespace hiermil
