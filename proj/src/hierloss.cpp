#include "hiermil/hierloss.hpp"

#include <cmath>

#include "hiermil/errors.hpp"

namespace hiermil {

namespace {

constexpr double kLogClamp = Tape::kLogClamp;  // inside logs only
constexpr double kLabelClamp = 1e-8;           // literal-KL label clamp

double clamped_log(double x) { return std::log(x > kLogClamp ? x : kLogClamp); }

// sum_i p_i log(p_i / q_i) with the 0 log 0 = 0 convention.
double kl(const double* p, const double* q, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] > 0.0) acc += p[i] * (clamped_log(p[i]) - clamped_log(q[i]));
    }
    return acc;
}

}  // namespace

double cross_entropy_hier(const ProbPair& probs, const SoftLabel& targets) {
    double acc = 0.0;
    for (int c = 0; c < kNumCoarse; ++c) acc += targets.coarse[c] * clamped_log(probs.coarse[c]);
    for (int c = 0; c < kNumFine; ++c) acc += targets.fine[c] * clamped_log(probs.fine[c]);
    return -0.5 * acc;
}

std::array<double, kNumCoarse> aggregate_fine_to_coarse(
    const std::array<double, kNumFine>& fine) {
    std::array<double, kNumCoarse> out{0.0, 0.0, 0.0};
    for (int c = 0; c < kNumFine; ++c) {
        out[static_cast<int>(Taxonomy::parent(static_cast<FineClass>(c)))] += fine[c];
    }
    return out;
}

double iha_loss(const std::array<double, kNumCoarse>& coarse,
                const std::array<double, kNumFine>& fine) {
    const auto agg = aggregate_fine_to_coarse(fine);
    std::array<double, kNumCoarse> m;
    for (int i = 0; i < kNumCoarse; ++i) m[i] = 0.5 * (coarse[i] + agg[i]);
    return 0.5 * (kl(coarse.data(), m.data(), kNumCoarse) + kl(agg.data(), m.data(), kNumCoarse));
}

std::array<double, kNumFine> uhd_adjust(const std::array<double, kNumFine>& fine,
                                        const std::array<double, kNumCoarse>& coarse) {
    std::array<double, kNumFine> out;
    double total = 0.0;
    for (int c = 0; c < kNumFine; ++c) {
        out[c] = fine[c] * coarse[static_cast<int>(Taxonomy::parent(static_cast<FineClass>(c)))];
        total += out[c];
    }
    if (total <= 0.0) throw NumericError("uhd_adjust: all-zero product vector");
    for (double& v : out) v /= total;
    return out;
}

double uhd_loss(const std::array<double, kNumFine>& adjusted,
                const std::array<double, kNumFine>& target, bool literal_kl) {
    if (literal_kl) {
        // KL(adjusted || target) with the target clamped inside the log.
        double acc = 0.0;
        for (int c = 0; c < kNumFine; ++c) {
            if (adjusted[c] > 0.0) {
                acc += adjusted[c] * (clamped_log(adjusted[c]) -
                                      std::log(target[c] > kLabelClamp ? target[c] : kLabelClamp));
            }
        }
        return acc;
    }
    return kl(target.data(), adjusted.data(), kNumFine);
}

LossBreakdown total_loss(const ProbPair& probs, const SoftLabel& targets,
                         const LossFlags& flags) {
    LossBreakdown out;
    out.ce = cross_entropy_hier(probs, targets);
    if (flags.use_iha) out.iha = iha_loss(probs.coarse, probs.fine);
    if (flags.use_uhd) {
        const auto adjusted = uhd_adjust(probs.fine, probs.coarse);
        out.uhd = uhd_loss(adjusted, targets.fine, flags.uhd_literal_kl);
    }
    out.total = out.ce + out.iha + out.uhd;
    return out;
}

namespace {

// Fine -> coarse aggregation as a constant 7x3 0/1 matrix so that the same
// parent map drives both loss routes.
Tensor2 aggregation_matrix() {
    Tensor2 m(kNumFine, kNumCoarse);
    for (int c = 0; c < kNumFine; ++c) {
        m.at(c, static_cast<int>(Taxonomy::parent(static_cast<FineClass>(c)))) = 1.0;
    }
    return m;
}

Tape::Ref build_kl_to(Tape& tape, Tape::Ref p, Tape::Ref m) {
    // KL(p || m) = <p, log p> - <p, log m>; softmax outputs keep p > 0.
    return tape.sub(tape.dot_all(p, tape.logp(p)), tape.dot_all(p, tape.logp(m)));
}

}  // namespace

LossRefs build_total_loss(Tape& tape, Tape::Ref coarse_probs, Tape::Ref fine_probs,
                          const SoftLabel& targets, const LossFlags& flags) {
    const Tape::Ref y_coarse =
        tape.leaf(Tensor2::row({targets.coarse[0], targets.coarse[1], targets.coarse[2]}));
    const Tape::Ref y_fine = tape.leaf(Tensor2::row(
        {targets.fine[0], targets.fine[1], targets.fine[2], targets.fine[3], targets.fine[4],
         targets.fine[5], targets.fine[6]}));

    LossRefs out;
    out.ce = tape.scale(tape.add(tape.dot_all(y_coarse, tape.logp(coarse_probs)),
                                 tape.dot_all(y_fine, tape.logp(fine_probs))),
                        -0.5);

    const Tape::Ref zero = tape.leaf(Tensor2(1, 1));
    if (flags.use_iha) {
        const Tape::Ref agg = tape.matmul(fine_probs, tape.leaf(aggregation_matrix()));
        const Tape::Ref m = tape.scale(tape.add(coarse_probs, agg), 0.5);
        out.iha = tape.scale(
            tape.add(build_kl_to(tape, coarse_probs, m), build_kl_to(tape, agg, m)), 0.5);
    } else {
        out.iha = zero;
    }

    if (flags.use_uhd) {
        const Tape::Ref expand =
            tape.matmul(coarse_probs, tape.leaf(transpose(aggregation_matrix())));
        const Tape::Ref prod = tape.mul(fine_probs, expand);
        const Tape::Ref adjusted = tape.div_scalar(prod, tape.sum_all(prod));
        if (flags.uhd_literal_kl) {
            Tensor2 log_y(1, kNumFine);
            for (int c = 0; c < kNumFine; ++c) {
                log_y.data()[c] =
                    std::log(targets.fine[c] > kLabelClamp ? targets.fine[c] : kLabelClamp);
            }
            out.uhd = tape.sub(tape.dot_all(adjusted, tape.logp(adjusted)),
                               tape.dot_all(adjusted, tape.leaf(std::move(log_y))));
        } else {
            // KL(y || adjusted) = sum y log y  -  <y, log adjusted>
            double y_log_y = 0.0;
            for (int c = 0; c < kNumFine; ++c) {
                if (targets.fine[c] > 0.0) y_log_y += targets.fine[c] * std::log(targets.fine[c]);
            }
            Tensor2 constant(1, 1);
            constant.data()[0] = y_log_y;
            out.uhd = tape.sub(tape.leaf(std::move(constant)),
                               tape.dot_all(y_fine, tape.logp(adjusted)));
        }
    } else {
        out.uhd = zero;
    }

    out.total = tape.add(tape.add(out.ce, out.iha), out.uhd);
    return out;
}

}  // namespace hiermil
