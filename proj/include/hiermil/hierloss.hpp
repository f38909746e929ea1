#pragma once
// The three training objectives and their sum:
//   - joint cross-entropy over both hierarchy levels (halved),
//   - inter-hierarchy alignment: JS divergence between the coarse prediction
//     and the fine prediction aggregated to coarse,
//   - upper-hierarchy-dependent loss: KL between the target and the fine
//     prediction rescaled by its parent's coarse probability.
//
// Each loss exists twice: as a pure function of probabilities (evaluation,
// tests) and as a tape builder (training). The two routes are cross-checked
// in the test suite.
//
// KL direction note: the upper-hierarchy term is implemented as
// KL(target || adjusted); the literal written order KL(adjusted || target)
// diverges for one-hot targets and is available behind `uhd_literal_kl`
// with 1e-8 label clamping.

#include <array>

#include "hiermil/data.hpp"
#include "hiermil/model.hpp"
#include "hiermil/tape.hpp"
#include "hiermil/taxonomy.hpp"

namespace hiermil {

struct LossBreakdown {
    double ce = 0.0;
    double iha = 0.0;
    double uhd = 0.0;
    double total = 0.0;
};

struct LossFlags {
    bool use_iha = true;
    bool use_uhd = true;
    bool uhd_literal_kl = false;
};

double cross_entropy_hier(const ProbPair& probs, const SoftLabel& targets);

std::array<double, kNumCoarse> aggregate_fine_to_coarse(
    const std::array<double, kNumFine>& fine);

// 0 <= JS <= ln 2; zero iff the aggregated fine distribution equals coarse.
double iha_loss(const std::array<double, kNumCoarse>& coarse,
                const std::array<double, kNumFine>& fine);

std::array<double, kNumFine> uhd_adjust(const std::array<double, kNumFine>& fine,
                                        const std::array<double, kNumCoarse>& coarse);

double uhd_loss(const std::array<double, kNumFine>& adjusted,
                const std::array<double, kNumFine>& target, bool literal_kl = false);

LossBreakdown total_loss(const ProbPair& probs, const SoftLabel& targets,
                         const LossFlags& flags = {});

// Tape route used by training. Disabled terms are constant zeros: they
// contribute nothing to the value or the gradient.
struct LossRefs {
    Tape::Ref ce;
    Tape::Ref iha;
    Tape::Ref uhd;
    Tape::Ref total;
};

LossRefs build_total_loss(Tape& tape, Tape::Ref coarse_probs, Tape::Ref fine_probs,
                          const SoftLabel& targets, const LossFlags& flags = {});

}  // namespace hiermil
