#include "hiermil/trainer.hpp"

#include <cmath>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"
#include "hiermil/kernels.hpp"

namespace hiermil {

AdamState AdamState::init(const ModelParams& params, const AdamHyper& hyper) {
    AdamState s;
    s.hyper = hyper;
    for (const auto& [name, t] : params.named_tensors()) {
        (void)name;
        s.m.emplace_back(t->rows(), t->cols());
        s.v.emplace_back(t->rows(), t->cols());
    }
    return s;
}

void adam_step(ModelParams& params, const std::vector<Tensor2>& grads, AdamState& state) {
    auto tensors = params.named_tensors();
    if (grads.size() != tensors.size()) {
        throw ShapeError("adam_step: expected " + std::to_string(tensors.size()) +
                         " gradient tensors, got " + std::to_string(grads.size()));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.hyper.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        Tensor2* p = tensors[k].second;
        if (!grads[k].same_shape(*p)) {
            throw ShapeError(std::string("adam_step: gradient shape mismatch for ") +
                             tensors[k].first);
        }
        kernels::adam_update(p->data(), state.m[k].data(), state.v[k].data(), grads[k].data(),
                             p->size(), state.hyper.lr, state.hyper.beta1, state.hyper.beta2,
                             state.hyper.eps, bc1, bc2);
    }
}

namespace {

struct EpochSample {
    const Bag* bag = nullptr;
    std::shared_ptr<const Bag> owned;  // set for remixed samples
    SoftLabel targets;
};

double validation_objective(const MetricsReport& val, const LossFlags& flags) {
    double obj = val.mean_loss.ce;
    if (flags.use_iha) obj += val.mean_loss.iha;
    if (flags.use_uhd) obj += val.mean_loss.uhd;
    return obj;
}

nlohmann::json level_to_json(const LevelMetrics& m) {
    nlohmann::json per_class = nlohmann::json::array();
    for (double a : m.per_class_auroc) {
        if (std::isnan(a)) {
            per_class.push_back(nullptr);
        } else {
            per_class.push_back(a);
        }
    }
    return nlohmann::json{
        {"accuracy", m.accuracy},
        {"macro_auroc", m.macro_auroc},
        {"per_class_auroc", per_class},
        {"excluded_classes", m.excluded_classes},
        {"confusion", m.confusion},
    };
}

nlohmann::json loss_to_json(const LossBreakdown& l) {
    return nlohmann::json{{"ce", l.ce}, {"iha", l.iha}, {"uhd", l.uhd}, {"total", l.total}};
}

nlohmann::json metrics_json(const MetricsReport& r) {
    return nlohmann::json{
        {"samples", r.sample_count},
        {"coarse", level_to_json(r.coarse)},
        {"fine", level_to_json(r.fine)},
        {"adenoma_recall", std::isnan(r.adenoma_recall) ? nlohmann::json(nullptr)
                                                        : nlohmann::json(r.adenoma_recall)},
        {"mean_loss", loss_to_json(r.mean_loss)},
    };
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& ds, const Taxonomy& taxonomy,
                  std::uint64_t seed, const std::string& config_snapshot) {
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    config.remix.validate();
    const auto train_idx = ds.indices_of(Split::Train);
    if (train_idx.empty()) throw ConfigError("train split is empty");
    if (ds.indices_of(Split::Val).empty()) throw ConfigError("validation split is empty");

    const GateMode eval_gate = config.use_subsite ? GateMode::Auto : GateMode::ForceClosed;
    const GateMode train_gate = (config.use_subsite && config.gate_subsite_in_training)
                                    ? GateMode::Auto
                                    : GateMode::ForceClosed;

    ModelParams params = init_params(static_cast<int>(ds.dim), config.attention_width, seed);
    AdamState adam = AdamState::init(params, config.adam);

    TrainResult result;
    result.history.seed = seed;
    result.history.config_snapshot = config_snapshot;

    double best_accuracy = -1.0;
    double best_objective = 0.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<EpochSample> samples;
        samples.reserve(train_idx.size());
        for (std::size_t i : train_idx) {
            EpochSample s;
            s.bag = &ds.entries[i].bag;
            s.targets = SoftLabel::one_hot(ds.entries[i].bag.label);
            samples.push_back(std::move(s));
        }

        std::vector<RemixEvent> events;
        if (config.use_remix) {
            const auto pairs = select_remix_pairs(ds, taxonomy, config.remix, seed, epoch);
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const auto& pair = pairs[p];
                const std::uint64_t remix_seed =
                    derive_seed(seed, (static_cast<std::uint64_t>(epoch) << 24) + p);
                RemixOutcome outcome =
                    remix_bags(ds.entries[pair.i].bag, ds.entries[pair.j].bag, pair.beta,
                               taxonomy, config.remix, remix_seed);
                events.push_back(RemixEvent{ds.entries[pair.i].bag.id,
                                            ds.entries[pair.j].bag.id, pair.beta});
                // The remixed sample replaces its higher-priority source.
                for (std::size_t k = 0; k < train_idx.size(); ++k) {
                    if (train_idx[k] == pair.i) {
                        auto owned = std::make_shared<Bag>(std::move(outcome.bag));
                        samples[k].bag = owned.get();
                        samples[k].owned = std::move(owned);
                        samples[k].targets = outcome.targets;
                        break;
                    }
                }
            }
        }

        Rng order_rng(derive_seed(seed, 0x0EDE4ull + static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(samples);

        LossBreakdown epoch_loss;
        for (const EpochSample& sample : samples) {
            Tape tape;
            const ModelTapeRefs refs = insert_params(tape, params);
            const ForwardRefs fwd = build_forward(tape, refs, *sample.bag, train_gate);
            const LossRefs loss =
                build_total_loss(tape, fwd.coarse_probs, fwd.fine_probs, sample.targets,
                                 config.loss_flags);
            const double total = tape.scalar_value(loss.total);
            if (!std::isfinite(total)) {
                throw NumericError("non-finite loss at sample " + sample.bag->id + " (epoch " +
                                   std::to_string(epoch) + ")");
            }
            epoch_loss.ce += tape.scalar_value(loss.ce);
            epoch_loss.iha += tape.scalar_value(loss.iha);
            epoch_loss.uhd += tape.scalar_value(loss.uhd);
            epoch_loss.total += total;

            tape.backward(loss.total);
            std::vector<Tensor2> grads;
            grads.reserve(10);
            for (Tape::Ref r : refs.all()) grads.push_back(tape.grad(r));
            adam_step(params, grads, adam);
        }
        const double inv = 1.0 / static_cast<double>(samples.size());
        epoch_loss.ce *= inv;
        epoch_loss.iha *= inv;
        epoch_loss.uhd *= inv;
        epoch_loss.total *= inv;

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss;
        record.val = evaluate(params, ds, Split::Val, eval_gate);
        record.remixed = std::move(events);

        const double accuracy = record.val.fine.accuracy;
        const double objective = validation_objective(record.val, config.loss_flags);
        if (accuracy > best_accuracy ||
            (accuracy == best_accuracy && objective < best_objective)) {
            best_accuracy = accuracy;
            best_objective = objective;
            result.params = params;
            result.history.best_epoch = epoch;
        }
        result.history.epochs.push_back(std::move(record));
    }
    return result;
}

void write_history(const RunHistory& history, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write history: " + path.string());
    nlohmann::json header{{"seed", history.seed}, {"best_epoch", history.best_epoch}};
    if (!history.config_snapshot.empty()) {
        header["config"] = nlohmann::json::parse(history.config_snapshot);
    } else {
        header["config"] = nullptr;
    }
    f << header.dump() << "\n";
    for (const auto& e : history.epochs) {
        nlohmann::json remixed = nlohmann::json::array();
        for (const auto& ev : e.remixed) {
            remixed.push_back({{"i", ev.source_i}, {"j", ev.source_j}, {"beta", ev.beta}});
        }
        nlohmann::json line{
            {"epoch", e.epoch},
            {"train_loss", loss_to_json(e.train_loss)},
            {"val", metrics_json(e.val)},
            {"remixed", remixed},
        };
        f << line.dump() << "\n";
    }
}

std::string metrics_to_json(const MetricsReport& report) { return metrics_json(report).dump(2); }

std::string priority_to_json(const PriorityReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({
            {"id", r.id},
            {"urgent", to_string(r.urgent)},
            {"other", to_string(r.other)},
            {"p_urgent", r.p_urgent},
            {"p_other", r.p_other},
            {"win", r.win},
        });
    }
    return nlohmann::json{{"win_rate", report.win_rate},
                          {"mean_gap", report.mean_gap},
                          {"rows", rows}}
        .dump(2);
}

}  // namespace hiermil
