#pragma once
// Evaluation: per-level accuracy and macro one-vs-rest AUROC (Mann-Whitney
// rank statistic, ties get half credit), binary recall with Adenoma as the
// positive class, confusion matrices, and the mixed-bag priority report.

#include <string>
#include <vector>

#include "hiermil/data.hpp"
#include "hiermil/hierloss.hpp"
#include "hiermil/model.hpp"
#include "hiermil/taxonomy.hpp"

namespace hiermil {

// Rank AUROC of scores against binary labels; 0.5 credit for tied scores.
// Returns NaN when either class is absent.
double rank_auroc(const std::vector<double>& scores, const std::vector<bool>& positive);

struct LevelMetrics {
    double accuracy = 0.0;
    double macro_auroc = 0.0;
    std::vector<double> per_class_auroc;        // NaN for excluded classes
    std::vector<int> excluded_classes;          // absent from the split
    std::vector<std::vector<int>> confusion;    // [true][predicted]
};

struct MetricsReport {
    LevelMetrics coarse;
    LevelMetrics fine;
    double adenoma_recall = 0.0;
    int sample_count = 0;
    // Full loss breakdown at evaluation time, all terms enabled regardless of
    // which ones were trained; ablation reports read these directly.
    LossBreakdown mean_loss;
};

// Evaluates `params` on one split. Order of samples does not affect the
// result; per-sample work may run on HIERMIL_THREADS threads with a
// deterministic reduction.
MetricsReport evaluate(const ModelParams& params, const Dataset& ds, Split split,
                       GateMode gate = GateMode::Auto);

struct PriorityRow {
    std::string id;
    FineClass urgent;
    FineClass other;
    double p_urgent = 0.0;
    double p_other = 0.0;
    bool win = false;  // fine argmax equals the urgent constituent
};

struct PriorityReport {
    double win_rate = 0.0;
    double mean_gap = 0.0;  // mean of p_urgent - p_other
    std::vector<PriorityRow> rows;
};

// Requires every bag in the split to carry mixture metadata.
PriorityReport evaluate_priority(const ModelParams& params, const Dataset& ds,
                                 GateMode gate = GateMode::Auto);

}  // namespace hiermil
