#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "hiermil/cli.hpp"
#include "hiermil/errors.hpp"

using namespace hiermil;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / "hiermil-cli-tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> store{"hiermil"};
    store.insert(store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : store) argv.push_back(s.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Tiny dataset + single-epoch trainer so command tests stay subsecond.
std::string tiny_config(const fs::path& dir) {
    const fs::path p = dir / "config.json";
    std::ofstream f(p);
    f << R"({
  "generator": {"d": 8, "class_counts": [6,6,6,6,6,6,6], "bag_min": 10, "bag_max": 20,
                 "mixed_pairs_per_combo": 1},
  "remix": {"min_bag_size": 10},
  "trainer": {"epochs": 1, "attention_width": 4}
})";
    return p.string();
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, malformed input") {
    const RunConfig defaults = RunConfig::from_json_text("{}");
    CHECK(defaults.seed == 0);
    CHECK(defaults.generator.d == 32);
    CHECK(defaults.trainer.adam.lr == 1e-4);
    CHECK(defaults.trainer.adam.beta1 == 0.9);
    CHECK(defaults.trainer.adam.beta2 == 0.999);
    CHECK(defaults.trainer.remix.tau == 15.0);
    CHECK(defaults.trainer.remix.beta_min == 0.4);
    CHECK(defaults.trainer.remix.beta_max == 0.8);
    CHECK(defaults.trainer.remix.min_bag_size == 150);
    CHECK(defaults.trainer.remix.remix_probability == 0.3);
    CHECK(defaults.trainer.loss_flags.use_iha);
    CHECK(defaults.trainer.use_subsite);

    const RunConfig c = RunConfig::from_json_text(
        R"({"seed": 9, "trainer": {"lr": 0.01}, "ablation": {"use_uhd": false},
            "taxonomy": {"fine_priority": ["TA","TVA","TSA","HP","SSL","IP","LP"]}})");
    CHECK(c.seed == 9);
    CHECK(c.trainer.adam.lr == 0.01);
    CHECK_FALSE(c.trainer.loss_flags.use_uhd);
    CHECK(c.taxonomy.fine_rank(FineClass::HP) == 3);  // overridden order
    CHECK(c.taxonomy.fine_rank(FineClass::SSL) == 4);

    CHECK_THROWS_AS(RunConfig::from_json_text("{nope"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json_text(R"({"trainer": {"lr": "fast"}})"), ConfigError);
    CHECK_THROWS_AS(
        RunConfig::from_json_text(R"({"taxonomy": {"fine_priority": ["TA"]}})"), ConfigError);
    // an inconsistent priority override is rejected by taxonomy validation
    CHECK_THROWS_AS(RunConfig::from_json_text(
                        R"({"taxonomy": {"fine_priority": ["LP","TVA","TSA","HP","SSL","IP","TA"]}})"),
                    ConfigError);
}

TEST_CASE("config round trip through to_json_text") {
    RunConfig c;
    c.seed = 5;
    c.trainer.epochs = 3;
    c.trainer.loss_flags.use_iha = false;
    c.generator.alpha = 0.17;
    const RunConfig back = RunConfig::from_json_text(c.to_json_text());
    CHECK(back.seed == 5);
    CHECK(back.trainer.epochs == 3);
    CHECK_FALSE(back.trainer.loss_flags.use_iha);
    CHECK(back.generator.alpha == 0.17);
}

TEST_CASE("remix-prob CSV: spot value, boundary cells, summary line") {
    cli::RemixProbGrid grid;
    grid.ns = {100};
    grid.alphas = {0.05, 0.6};
    grid.betas = {0.4, 0.5};
    const std::string csv = cli::remix_prob_csv(grid);
    CHECK(csv.find("n,alpha,beta,p_success") == 0);
    CHECK(csv.find("100,0.05,0.4,0.9274579373") != std::string::npos);
    CHECK(csv.find("100,0.6,0.4,1") != std::string::npos);  // alpha+beta >= 1
    CHECK(csv.find("100,0.6,0.5,1") != std::string::npos);
    CHECK(csv.find("# n=100 feasible_cells=2") != std::string::npos);

    cli::RemixProbGrid empty = grid;
    empty.alphas.clear();
    CHECK_THROWS_AS(cli::remix_prob_csv(empty), ConfigError);
}

TEST_CASE("cli exit codes: usage and config errors map to 2") {
    const auto dir = temp_dir("codes");
    // unknown subcommand
    CHECK(run_cli({"frobnicate"}) == 2);
    // alpha = 0 is a config error
    const fs::path bad = dir / "bad.json";
    {
        std::ofstream f(bad);
        f << R"({"generator": {"alpha": 0.0}})";
    }
    CHECK(run_cli({"gen-data", "--config", bad.string(), "--out", (dir / "x").string()}) == 2);
    // missing config file
    CHECK(run_cli({"gen-data", "--config", (dir / "none.json").string()}) == 2);
    // empty alpha grid on remix-prob
    CHECK(run_cli({"remix-prob", "--n", "100", "--alpha", ""}) == 2);
}

TEST_CASE("gen-data is idempotent for a fixed seed") {
    const auto dir = temp_dir("idem");
    const std::string cfg = tiny_config(dir);
    REQUIRE(run_cli({"gen-data", "--config", cfg, "--out", (dir / "a").string(), "--seed",
                     "3"}) == 0);
    REQUIRE(run_cli({"gen-data", "--config", cfg, "--out", (dir / "b").string(), "--seed",
                     "3"}) == 0);
    CHECK(slurp(dir / "a" / "manifest.jsonl") == slurp(dir / "b" / "manifest.jsonl"));
    // compare one bag payload byte for byte
    std::string first_bag;
    {
        std::istringstream manifest(slurp(dir / "a" / "manifest.jsonl"));
        std::string line;
        std::getline(manifest, line);
        const auto pos = line.find("\"path\":\"");
        first_bag = line.substr(pos + 8);
        first_bag = first_bag.substr(0, first_bag.find('"'));
    }
    CHECK(slurp(dir / "a" / first_bag) == slurp(dir / "b" / first_bag));
}

TEST_CASE("gen-data, train, eval pipeline through the cli surface") {
    const auto dir = temp_dir("pipeline");
    const std::string cfg = tiny_config(dir);
    const std::string data = (dir / "data").string();
    const std::string run = (dir / "run").string();

    REQUIRE(run_cli({"gen-data", "--config", cfg, "--out", data, "--seed", "1"}) == 0);
    REQUIRE(run_cli({"train", "--config", cfg, "--data", data, "--out", run, "--seed", "1"}) ==
            0);
    CHECK(fs::exists(fs::path(run) / "model.ckpt"));
    CHECK(fs::exists(fs::path(run) / "history.jsonl"));
    CHECK(fs::exists(fs::path(run) / "config.json"));

    const std::string report = (dir / "report.json").string();
    REQUIRE(run_cli({"eval", "--config", cfg, "--data", data, "--checkpoint",
                     (fs::path(run) / "model.ckpt").string(), "--split", "test", "--report",
                     report}) == 0);
    const std::string text = slurp(report);
    CHECK(text.find("\"accuracy\"") != std::string::npos);
    CHECK(text.find("\"adenoma_recall\"") != std::string::npos);

    // mixed split additionally writes per-bag priority rows
    const std::string mixed_report = (dir / "mixed.json").string();
    REQUIRE(run_cli({"eval", "--config", cfg, "--data", data, "--checkpoint",
                     (fs::path(run) / "model.ckpt").string(), "--split", "test-mixed",
                     "--report", mixed_report}) == 0);
    const std::string mixed_text = slurp(dir / "mixed.priority.json");
    CHECK(mixed_text.find("\"win_rate\"") != std::string::npos);
    CHECK(mixed_text.find("\"p_urgent\"") != std::string::npos);

    // invalid split name is a usage error
    CHECK(run_cli({"eval", "--config", cfg, "--data", data, "--checkpoint",
                   (fs::path(run) / "model.ckpt").string(), "--split", "bogus"}) == 2);

    // --no-iha propagates into the recorded history
    const std::string run2 = (dir / "run2").string();
    REQUIRE(run_cli({"train", "--config", cfg, "--data", data, "--out", run2, "--seed", "1",
                     "--no-iha"}) == 0);
    const std::string history = slurp(fs::path(run2) / "history.jsonl");
    CHECK(history.find("\"iha\":0.0") != std::string::npos);
}
