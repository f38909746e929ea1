#include "hiermil/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiermil/errors.hpp"
#include "hiermil/remix.hpp"
#include "hiermil/rng.hpp"
#include "hiermil/trainer.hpp"

namespace hiermil::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write " + path.string());
    f << text;
}

void persist_config(const RunConfig& config, const fs::path& dir) {
    fs::create_directories(dir);
    write_text(dir / "config.json", config.to_json_text() + "\n");
}

void print_counts_table(const Dataset& ds) {
    std::printf("%-11s", "split");
    for (int c = 0; c < kNumFine; ++c) std::printf("%6s", to_string(static_cast<FineClass>(c)));
    std::printf("%8s\n", "total");
    for (int s = 0; s < 4; ++s) {
        int per_class[kNumFine] = {0};
        int total = 0;
        for (const auto& e : ds.entries) {
            if (e.split == static_cast<Split>(s)) {
                ++per_class[static_cast<int>(e.bag.label)];
                ++total;
            }
        }
        std::printf("%-11s", to_string(static_cast<Split>(s)));
        for (int c = 0; c < kNumFine; ++c) std::printf("%6d", per_class[c]);
        std::printf("%8d\n", total);
    }
}

GateMode eval_gate(const RunConfig& config) {
    return config.trainer.use_subsite ? GateMode::Auto : GateMode::ForceClosed;
}

struct VariantSummary {
    std::string name;
    MetricsReport val;
    MetricsReport test;
    double mixed_win_rate = std::nan("");
};

VariantSummary run_variant(const std::string& name, RunConfig config, const Dataset& ds,
                           const fs::path& out_dir) {
    config.out_dir = (out_dir / name).string();
    fs::create_directories(config.out_dir);
    const TrainResult result =
        train(config.trainer, ds, config.taxonomy, config.seed, config.to_json_text());
    save_checkpoint(result.params, fs::path(config.out_dir) / "model.ckpt");
    write_history(result.history, fs::path(config.out_dir) / "history.jsonl");
    persist_config(config, config.out_dir);

    VariantSummary summary;
    summary.name = name;
    summary.val = evaluate(result.params, ds, Split::Val, eval_gate(config));
    summary.test = evaluate(result.params, ds, Split::Test, eval_gate(config));
    if (!ds.indices_of(Split::TestMixed).empty()) {
        summary.mixed_win_rate =
            evaluate_priority(result.params, ds, eval_gate(config)).win_rate;
    }
    return summary;
}

}  // namespace

void gen_data(const RunConfig& config) {
    Dataset ds = generate_synthetic(config.generator, config.seed);
    split_dataset(ds, config.generator.split_ratios, config.seed);
    if (config.generator.mixed_pairs_per_combo > 0) {
        Dataset mixed = generate_mixed_test(config.generator, config.taxonomy,
                                            derive_seed(config.seed, 0x3130DDull));
        for (auto& e : mixed.entries) ds.entries.push_back(std::move(e));
        ds.validate();
    }
    save_dataset(ds, config.out_dir);
    persist_config(config, config.out_dir);
    print_counts_table(ds);
}

void train_run(const RunConfig& config) {
    const Dataset ds = load_dataset(config.effective_data_dir());
    const TrainResult result =
        train(config.trainer, ds, config.taxonomy, config.seed, config.to_json_text());
    fs::create_directories(config.out_dir);
    save_checkpoint(result.params, fs::path(config.out_dir) / "model.ckpt");
    write_history(result.history, fs::path(config.out_dir) / "history.jsonl");
    persist_config(config, config.out_dir);

    const auto& last = result.history.epochs.back();
    std::printf("trained %d epochs; best epoch %d\n", last.epoch, result.history.best_epoch);
    const MetricsReport best_val = evaluate(result.params, ds, Split::Val, eval_gate(config));
    std::printf("val accuracy: coarse %.4f fine %.4f, adenoma recall %.4f\n",
                best_val.coarse.accuracy, best_val.fine.accuracy, best_val.adenoma_recall);
}

void eval_run(const RunConfig& config, const std::string& checkpoint,
              const std::string& split_name, const std::string& report_path) {
    const Split split = split_from_string(split_name);
    const Dataset ds = load_dataset(config.effective_data_dir());
    const ModelParams params = load_checkpoint(checkpoint);
    if (params.d != static_cast<int>(ds.dim)) {
        throw InputError("checkpoint d=" + std::to_string(params.d) +
                         " does not match dataset dim=" + std::to_string(ds.dim));
    }
    const MetricsReport report = evaluate(params, ds, split, eval_gate(config));
    const std::string metrics = metrics_to_json(report);
    std::printf("%s\n", metrics.c_str());
    if (!report_path.empty()) write_text(report_path, metrics + "\n");

    if (split == Split::TestMixed) {
        const PriorityReport priority = evaluate_priority(params, ds, eval_gate(config));
        const std::string text = priority_to_json(priority);
        std::printf("%s\n", text.c_str());
        if (!report_path.empty()) {
            fs::path p(report_path);
            p.replace_extension(".priority.json");
            write_text(p, text + "\n");
        }
    }
}

std::string remix_prob_csv(const RemixProbGrid& grid) {
    if (grid.ns.empty()) throw ConfigError("remix-prob: empty n list");
    if (grid.alphas.empty()) throw ConfigError("remix-prob: empty alpha grid");
    if (grid.betas.empty()) throw ConfigError("remix-prob: empty beta grid");

    std::ostringstream out;
    out << "n,alpha,beta,p_success\n";
    char buf[128];
    for (std::int64_t n : grid.ns) {
        int feasible = 0;
        int below = 0;
        for (double alpha : grid.alphas) {
            for (double beta : grid.betas) {
                const double p = remix_success_prob(n, alpha, beta);
                if (alpha + beta < 1.0) {
                    ++feasible;
                    if (p <= 0.99) ++below;
                }
                std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g\n",
                              static_cast<long long>(n), alpha, beta, p);
                out << buf;
            }
        }
        const double fraction =
            feasible > 0 ? static_cast<double>(below) / feasible : std::nan("");
        std::snprintf(buf, sizeof(buf), "# n=%lld feasible_cells=%d fraction_p_le_0.99=%.6g\n",
                      static_cast<long long>(n), feasible, fraction);
        out << buf;
    }
    return out.str();
}

void ablate_run(const RunConfig& config) {
    const Dataset ds = load_dataset(config.effective_data_dir());
    const fs::path out_dir(config.out_dir);
    fs::create_directories(out_dir);

    std::vector<VariantSummary> results;
    {
        RunConfig v = config;
        results.push_back(run_variant("full", v, ds, out_dir));
    }
    {
        RunConfig v = config;
        v.trainer.loss_flags.use_iha = false;
        results.push_back(run_variant("no-iha", v, ds, out_dir));
    }
    {
        RunConfig v = config;
        v.trainer.loss_flags.use_uhd = false;
        results.push_back(run_variant("no-uhd", v, ds, out_dir));
    }
    {
        RunConfig v = config;
        v.trainer.use_subsite = false;
        results.push_back(run_variant("no-subsite", v, ds, out_dir));
    }
    {
        RunConfig v = config;
        v.trainer.use_remix = false;
        results.push_back(run_variant("no-remix", v, ds, out_dir));
    }

    std::printf("%-11s %9s %9s %9s %10s %10s\n", "variant", "fine_acc", "coarse_acc", "recall",
                "mixed_win", "val_iha");
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& r : results) {
        std::printf("%-11s %9.4f %9.4f %9.4f %10.4f %10.6f\n", r.name.c_str(),
                    r.test.fine.accuracy, r.test.coarse.accuracy, r.test.adenoma_recall,
                    r.mixed_win_rate, r.val.mean_loss.iha);
        summary.push_back({
            {"variant", r.name},
            {"test_fine_accuracy", r.test.fine.accuracy},
            {"test_coarse_accuracy", r.test.coarse.accuracy},
            {"test_adenoma_recall", r.test.adenoma_recall},
            {"mixed_win_rate", std::isnan(r.mixed_win_rate) ? nlohmann::json(nullptr)
                                                            : nlohmann::json(r.mixed_win_rate)},
            {"val_mean_iha", r.val.mean_loss.iha},
        });
    }
    write_text(out_dir / "ablation.json", summary.dump(2) + "\n");
}

namespace {

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double start, stop, step;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0) {
            throw ConfigError("grid must be start:stop:step, got '" + spec + "'");
        }
        for (double v = start; v <= stop + 1e-12; v += step) out.push_back(v);
        return out;
    }
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(std::stod(token));
    }
    return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& spec) {
    std::vector<std::int64_t> out;
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) out.push_back(std::stoll(token));
    }
    return out;
}

// Bag sizes of the single-symptom portion of a dataset, for Fig.-3-style
// tables at the dataset's median, mean and max n.
std::vector<std::int64_t> dataset_n_summary(const std::string& data_dir) {
    const Dataset ds = load_dataset(data_dir);
    std::vector<std::int64_t> sizes;
    for (const auto& e : ds.entries) {
        if (e.split != Split::TestMixed) {
            sizes.push_back(static_cast<std::int64_t>(e.bag.instance_count()));
        }
    }
    std::sort(sizes.begin(), sizes.end());
    const std::int64_t median = sizes[sizes.size() / 2];
    double mean = 0.0;
    for (auto s : sizes) mean += static_cast<double>(s);
    mean /= static_cast<double>(sizes.size());
    std::vector<std::int64_t> out{median, static_cast<std::int64_t>(std::llround(mean)),
                                  sizes.back()};
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct CliFlags {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    std::int64_t seed = -1;
    int epochs = -1;
    bool no_iha = false, no_uhd = false, no_subsite = false, no_remix = false;

    RunConfig merge() const {
        RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
        if (!out_dir.empty()) c.out_dir = out_dir;
        if (!data_dir.empty()) c.data_dir = data_dir;
        if (epochs > 0) c.trainer.epochs = epochs;
        if (no_iha) c.trainer.loss_flags.use_iha = false;
        if (no_uhd) c.trainer.loss_flags.use_uhd = false;
        if (no_subsite) c.trainer.use_subsite = false;
        if (no_remix) {
            c.trainer.use_remix = false;
            c.trainer.remix.remix_probability = 0.0;
        }
        return c;
    }
};

void add_common_flags(CLI::App* cmd, CliFlags& flags, bool with_ablation) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--seed", flags.seed, "RNG seed override");
    cmd->add_option("--out", flags.out_dir, "output directory override");
    cmd->add_option("--data", flags.data_dir, "dataset directory override");
    if (with_ablation) {
        cmd->add_option("--epochs", flags.epochs, "epoch count override");
        cmd->add_flag("--no-iha", flags.no_iha, "disable the alignment loss");
        cmd->add_flag("--no-uhd", flags.no_uhd, "disable the upper-hierarchy loss");
        cmd->add_flag("--no-subsite", flags.no_subsite, "force the subsite gate closed");
        cmd->add_flag("--no-remix", flags.no_remix, "disable feature remixing");
    }
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"priority-aware hierarchical MIL trainer"};
    app.require_subcommand(1);

    CliFlags gen_flags, train_flags, eval_flags, ablate_flags;
    std::string eval_checkpoint, eval_split = "test", eval_report;
    std::string rp_n, rp_alpha = "0.05:0.5:0.05", rp_beta = "0.4:0.8:0.05", rp_out, rp_data;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic bag dataset");
    add_common_flags(gen, gen_flags, false);

    CLI::App* tr = app.add_subcommand("train", "train the two-head MIL model");
    add_common_flags(tr, train_flags, true);

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common_flags(ev, eval_flags, true);
    ev->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    ev->add_option("--split", eval_split, "train|val|test|test-mixed");
    ev->add_option("--report", eval_report, "write the JSON report here");

    CLI::App* rp = app.add_subcommand("remix-prob", "emit the remix success probability grid");
    rp->add_option("--n", rp_n, "comma-separated bag sizes");
    rp->add_option("--data", rp_data, "derive n from this dataset (median, mean, max)");
    rp->add_option("--alpha", rp_alpha, "alpha grid (start:stop:step or comma list)");
    rp->add_option("--beta", rp_beta, "beta grid (start:stop:step or comma list)");
    rp->add_option("--out", rp_out, "write CSV here instead of stdout");

    CLI::App* ab = app.add_subcommand("ablate", "train and compare the five ablation variants");
    add_common_flags(ab, ablate_flags, true);

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            gen_data(gen_flags.merge());
        } else if (tr->parsed()) {
            train_run(train_flags.merge());
        } else if (ev->parsed()) {
            eval_run(eval_flags.merge(), eval_checkpoint, eval_split, eval_report);
        } else if (rp->parsed()) {
            RemixProbGrid grid;
            if (!rp_n.empty()) grid.ns = parse_int_list(rp_n);
            if (!rp_data.empty()) {
                const auto derived = dataset_n_summary(rp_data);
                grid.ns.insert(grid.ns.end(), derived.begin(), derived.end());
            }
            grid.alphas = parse_grid(rp_alpha);
            grid.betas = parse_grid(rp_beta);
            const std::string csv = remix_prob_csv(grid);
            if (rp_out.empty()) {
                std::fputs(csv.c_str(), stdout);
            } else {
                write_text(rp_out, csv);
            }
        } else if (ab->parsed()) {
            ablate_run(ablate_flags.merge());
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "abort: %s\n", e.what());
        return 3;
    }
}

}  // namespace hiermil::cli
