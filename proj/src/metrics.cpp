#include "hiermil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <thread>

#include "hiermil/errors.hpp"

namespace hiermil {

namespace {

int thread_budget(std::size_t work_items) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("HIERMIL_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return static_cast<int>(std::min<std::size_t>(n, std::max<std::size_t>(work_items, 1)));
}

// Run fn(i) for i in [0, count) across the thread budget; results must be
// written to preallocated per-index slots so the reduction stays ordered.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const int threads = thread_budget(count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

double rank_auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks within tie groups (1-based ranks).
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (positive[k]) pos_rank_sum += rank[k];
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

LevelMetrics level_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                           const std::vector<std::vector<double>>& probs, int num_classes) {
    LevelMetrics m;
    m.confusion.assign(num_classes, std::vector<int>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        m.confusion[truth[i]][predicted[i]] += 1;
        if (truth[i] == predicted[i]) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

    m.per_class_auroc.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    double auroc_sum = 0.0;
    int auroc_count = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> scores(truth.size());
        std::vector<bool> positive(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i) {
            scores[i] = probs[i][c];
            positive[i] = truth[i] == c;
        }
        const double auc = rank_auroc(scores, positive);
        if (std::isnan(auc)) {
            m.excluded_classes.push_back(c);
        } else {
            m.per_class_auroc[c] = auc;
            auroc_sum += auc;
            ++auroc_count;
        }
    }
    m.macro_auroc = auroc_count > 0 ? auroc_sum / auroc_count
                                    : std::numeric_limits<double>::quiet_NaN();
    return m;
}

}  // namespace

MetricsReport evaluate(const ModelParams& params, const Dataset& ds, Split split,
                       GateMode gate) {
    const auto indices = ds.indices_of(split);
    if (indices.empty()) {
        throw InputError(std::string("split '") + to_string(split) + "' is empty");
    }

    struct SampleOut {
        ProbPair probs;
        LossBreakdown loss;
    };
    std::vector<SampleOut> outs(indices.size());
    parallel_for(indices.size(), [&](std::size_t k) {
        const Bag& bag = ds.entries[indices[k]].bag;
        const PredictResult pred = predict(params, bag, gate);
        outs[k].probs = pred.probs;
        outs[k].loss = total_loss(pred.probs, SoftLabel::one_hot(bag.label), LossFlags{});
    });

    std::vector<int> fine_truth(indices.size()), fine_pred(indices.size());
    std::vector<int> coarse_truth(indices.size()), coarse_pred(indices.size());
    std::vector<std::vector<double>> fine_probs(indices.size()), coarse_probs(indices.size());
    MetricsReport report;
    report.sample_count = static_cast<int>(indices.size());
    int tp = 0, fn = 0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const Bag& bag = ds.entries[indices[k]].bag;
        const auto& p = outs[k].probs;
        fine_truth[k] = static_cast<int>(bag.label);
        coarse_truth[k] = static_cast<int>(Taxonomy::parent(bag.label));
        fine_probs[k].assign(p.fine.begin(), p.fine.end());
        coarse_probs[k].assign(p.coarse.begin(), p.coarse.end());
        fine_pred[k] = static_cast<int>(argmax(fine_probs[k]));
        coarse_pred[k] = static_cast<int>(argmax(coarse_probs[k]));

        const bool actual_pos = Taxonomy::parent(bag.label) == CoarseClass::Adenoma;
        const bool predicted_pos =
            Taxonomy::parent(static_cast<FineClass>(fine_pred[k])) == CoarseClass::Adenoma;
        if (actual_pos) {
            if (predicted_pos) ++tp;
            else ++fn;
        }

        report.mean_loss.ce += outs[k].loss.ce;
        report.mean_loss.iha += outs[k].loss.iha;
        report.mean_loss.uhd += outs[k].loss.uhd;
        report.mean_loss.total += outs[k].loss.total;
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    report.mean_loss.ce *= inv;
    report.mean_loss.iha *= inv;
    report.mean_loss.uhd *= inv;
    report.mean_loss.total *= inv;

    report.fine = level_metrics(fine_truth, fine_pred, fine_probs, kNumFine);
    report.coarse = level_metrics(coarse_truth, coarse_pred, coarse_probs, kNumCoarse);
    report.adenoma_recall = (tp + fn) > 0
                                ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                                : std::numeric_limits<double>::quiet_NaN();
    return report;
}

PriorityReport evaluate_priority(const ModelParams& params, const Dataset& ds, GateMode gate) {
    const auto indices = ds.indices_of(Split::TestMixed);
    if (indices.empty()) throw InputError("mixed test split is empty");
    for (std::size_t i : indices) {
        if (!ds.entries[i].mixed) {
            throw InputError("bag " + ds.entries[i].bag.id + " lacks mixture metadata");
        }
    }

    PriorityReport report;
    report.rows.resize(indices.size());
    parallel_for(indices.size(), [&](std::size_t k) {
        const auto& entry = ds.entries[indices[k]];
        const PredictResult pred = predict(params, entry.bag, gate);
        PriorityRow row;
        row.id = entry.bag.id;
        row.urgent = entry.bag.label;
        row.other = entry.mixed->other;
        row.p_urgent = pred.probs.fine[static_cast<int>(row.urgent)];
        row.p_other = pred.probs.fine[static_cast<int>(row.other)];
        const std::vector<double> fine(pred.probs.fine.begin(), pred.probs.fine.end());
        row.win = argmax(fine) == static_cast<std::size_t>(row.urgent);
        report.rows[k] = std::move(row);
    });

    double wins = 0.0, gap = 0.0;
    for (const auto& row : report.rows) {
        wins += row.win ? 1.0 : 0.0;
        gap += row.p_urgent - row.p_other;
    }
    report.win_rate = wins / static_cast<double>(report.rows.size());
    report.mean_gap = gap / static_cast<double>(report.rows.size());
    return report;
}

}  // namespace hiermil
