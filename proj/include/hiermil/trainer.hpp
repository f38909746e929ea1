#pragma once
// Adam optimization and the end-to-end training loop: per-bag updates over a
// per-epoch sample list in which selected samples are replaced by remixed
// ones, with best-validation checkpoint selection and a persisted run
// history (JSON lines, one epoch per line).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hiermil/data.hpp"
#include "hiermil/hierloss.hpp"
#include "hiermil/metrics.hpp"
#include "hiermil/model.hpp"
#include "hiermil/remix.hpp"
#include "hiermil/tensor.hpp"

namespace hiermil {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    std::int64_t t = 0;
    std::vector<Tensor2> m;  // parallel to ModelParams::named_tensors()
    std::vector<Tensor2> v;

    static AdamState init(const ModelParams& params, const AdamHyper& hyper);
};

// One bias-corrected Adam step; grads must parallel named_tensors().
void adam_step(ModelParams& params, const std::vector<Tensor2>& grads, AdamState& state);

struct TrainConfig {
    AdamHyper adam;
    int epochs = 50;
    int attention_width = 16;
    RemixConfig remix;
    LossFlags loss_flags;
    bool use_subsite = true;
    bool use_remix = true;
    // Whether the Serrated gate may open during training passes (it always
    // follows the coarse argmax at inference).
    bool gate_subsite_in_training = true;
};

struct RemixEvent {
    std::string source_i;
    std::string source_j;
    double beta = 0.0;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    LossBreakdown train_loss;  // objective values: disabled terms are zero
    MetricsReport val;
    std::vector<RemixEvent> remixed;
};

struct RunHistory {
    std::uint64_t seed = 0;
    std::string config_snapshot;  // serialized config, optional
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 1-based
};

struct TrainResult {
    ModelParams params;  // best-validation parameters
    RunHistory history;
};

// Deterministic given (config, dataset, seed). Aborts with a diagnostic
// naming the sample when a loss turns non-finite.
TrainResult train(const TrainConfig& config, const Dataset& ds, const Taxonomy& taxonomy,
                  std::uint64_t seed, const std::string& config_snapshot = {});

void write_history(const RunHistory& history, const std::filesystem::path& path);

// JSON serialization used by both the history and `eval` reports.
std::string metrics_to_json(const MetricsReport& report);
std::string priority_to_json(const PriorityReport& report);

}  // namespace hiermil
