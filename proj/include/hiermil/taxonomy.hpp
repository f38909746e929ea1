#pragma once
// The fixed two-level diagnosis hierarchy: seven fine classes grouped into
// three coarse ones, plus the urgency (priority) order used by remixing.
// Integer codes are stable and follow the listing order of the classes, so
// persisted files and reports stay comparable across runs.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hiermil {

enum class FineClass : std::uint8_t { TA = 0, TVA = 1, TSA = 2, HP = 3, SSL = 4, IP = 5, LP = 6 };
enum class CoarseClass : std::uint8_t { Adenoma = 0, Serrated = 1, Others = 2 };

inline constexpr int kNumFine = 7;
inline constexpr int kNumCoarse = 3;

const char* to_string(FineClass c);
const char* to_string(CoarseClass c);
FineClass fine_from_string(const std::string& name);
CoarseClass coarse_from_string(const std::string& name);

enum class Subsite : std::uint8_t { Proximal = 0, Distal = 1, Unknown = 2 };

const char* to_string(Subsite s);
Subsite subsite_from_string(const std::string& name);
std::array<double, 3> subsite_one_hot(Subsite s);

enum class Level : std::uint8_t { Coarse = 1, Fine = 2 };

// A class at an explicit level, for priority comparisons that must reject
// mixed-level arguments.
struct ClassRef {
    Level level;
    int code;
};

class Taxonomy {
public:
    // Default: parent map from the class listing; coarse urgency
    // Adenoma > Serrated > Others; fine urgency TA, TVA, TSA, SSL, HP, IP, LP.
    Taxonomy();

    // Custom priority ranks (rank 0 = most urgent). Throws ConfigError when
    // either rank set is not a permutation or the fine order is inconsistent
    // with the coarse order.
    Taxonomy(const std::array<int, kNumFine>& fine_priority,
             const std::array<int, kNumCoarse>& coarse_priority);

    static CoarseClass parent(FineClass c);
    static std::vector<FineClass> children(CoarseClass c);

    int fine_rank(FineClass c) const { return fine_rank_[static_cast<int>(c)]; }
    int coarse_rank(CoarseClass c) const { return coarse_rank_[static_cast<int>(c)]; }

    bool higher_priority(FineClass a, FineClass b) const {
        return fine_rank(a) < fine_rank(b);
    }
    bool higher_priority(CoarseClass a, CoarseClass b) const {
        return coarse_rank(a) < coarse_rank(b);
    }
    // Level-checked variant; throws on mixed levels or out-of-range codes.
    bool higher_priority(ClassRef a, ClassRef b) const;

    const std::array<int, kNumFine>& fine_ranks() const { return fine_rank_; }
    const std::array<int, kNumCoarse>& coarse_ranks() const { return coarse_rank_; }

private:
    void validate() const;

    std::array<int, kNumFine> fine_rank_;
    std::array<int, kNumCoarse> coarse_rank_;
};

}  // namespace hiermil
