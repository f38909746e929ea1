#include "hiermil/config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hiermil/errors.hpp"

namespace hiermil {

namespace {

using nlohmann::json;

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

Taxonomy taxonomy_from_json(const json& j) {
    std::array<int, kNumFine> fine_rank{};
    std::array<int, kNumCoarse> coarse_rank{};
    {
        Taxonomy defaults;
        fine_rank = defaults.fine_ranks();
        coarse_rank = defaults.coarse_ranks();
    }
    if (j.contains("fine_priority")) {
        const auto names = j.at("fine_priority").get<std::vector<std::string>>();
        if (names.size() != kNumFine) {
            throw ConfigError("fine_priority must list all 7 classes, most urgent first");
        }
        for (int rank = 0; rank < kNumFine; ++rank) {
            fine_rank[static_cast<int>(fine_from_string(names[rank]))] = rank;
        }
    }
    if (j.contains("coarse_priority")) {
        const auto names = j.at("coarse_priority").get<std::vector<std::string>>();
        if (names.size() != kNumCoarse) {
            throw ConfigError("coarse_priority must list all 3 classes, most urgent first");
        }
        for (int rank = 0; rank < kNumCoarse; ++rank) {
            coarse_rank[static_cast<int>(coarse_from_string(names[rank]))] = rank;
        }
    }
    return Taxonomy(fine_rank, coarse_rank);
}

json taxonomy_to_json(const Taxonomy& t) {
    std::vector<std::string> fine(kNumFine), coarse(kNumCoarse);
    for (int c = 0; c < kNumFine; ++c) {
        fine[t.fine_rank(static_cast<FineClass>(c))] = to_string(static_cast<FineClass>(c));
    }
    for (int c = 0; c < kNumCoarse; ++c) {
        coarse[t.coarse_rank(static_cast<CoarseClass>(c))] =
            to_string(static_cast<CoarseClass>(c));
    }
    return json{{"fine_priority", fine}, {"coarse_priority", coarse}};
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON");
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    RunConfig c;
    read_into(j, "seed", c.seed);
    read_into(j, "out", c.out_dir);
    read_into(j, "data", c.data_dir);

    if (j.contains("taxonomy")) c.taxonomy = taxonomy_from_json(j.at("taxonomy"));

    if (j.contains("generator")) {
        const json& g = j.at("generator");
        read_into(g, "d", c.generator.d);
        read_into(g, "class_counts", c.generator.class_counts);
        read_into(g, "alpha", c.generator.alpha);
        read_into(g, "separation", c.generator.separation);
        read_into(g, "bag_min", c.generator.bag_min);
        read_into(g, "bag_max", c.generator.bag_max);
        read_into(g, "split_ratios", c.generator.split_ratios);
        read_into(g, "mixed_pairs_per_combo", c.generator.mixed_pairs_per_combo);
        read_into(g, "mixed_frac_min", c.generator.mixed_frac_min);
        read_into(g, "mixed_frac_max", c.generator.mixed_frac_max);
        if (g.contains("mixed_pairs")) {
            for (const auto& pair : g.at("mixed_pairs")) {
                const auto names = pair.get<std::vector<std::string>>();
                if (names.size() != 2) throw ConfigError("mixed_pairs entries must be pairs");
                c.generator.mixed_pairs.emplace_back(fine_from_string(names[0]),
                                                     fine_from_string(names[1]));
            }
        }
    }

    if (j.contains("remix")) {
        const json& r = j.at("remix");
        read_into(r, "beta_min", c.trainer.remix.beta_min);
        read_into(r, "beta_max", c.trainer.remix.beta_max);
        read_into(r, "min_bag_size", c.trainer.remix.min_bag_size);
        read_into(r, "tau", c.trainer.remix.tau);
        read_into(r, "remix_probability", c.trainer.remix.remix_probability);
    }

    if (j.contains("trainer")) {
        const json& t = j.at("trainer");
        read_into(t, "lr", c.trainer.adam.lr);
        read_into(t, "beta1", c.trainer.adam.beta1);
        read_into(t, "beta2", c.trainer.adam.beta2);
        read_into(t, "eps", c.trainer.adam.eps);
        read_into(t, "epochs", c.trainer.epochs);
        read_into(t, "attention_width", c.trainer.attention_width);
        read_into(t, "gate_subsite_in_training", c.trainer.gate_subsite_in_training);
        read_into(t, "uhd_literal_kl", c.trainer.loss_flags.uhd_literal_kl);
    }

    if (j.contains("ablation")) {
        const json& a = j.at("ablation");
        read_into(a, "use_iha", c.trainer.loss_flags.use_iha);
        read_into(a, "use_uhd", c.trainer.loss_flags.use_uhd);
        read_into(a, "use_subsite", c.trainer.use_subsite);
        read_into(a, "use_remix", c.trainer.use_remix);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    json pairs = json::array();
    for (const auto& [a, b] : generator.mixed_pairs) {
        pairs.push_back({to_string(a), to_string(b)});
    }
    const json j{
        {"seed", seed},
        {"out", out_dir},
        {"data", data_dir},
        {"taxonomy", taxonomy_to_json(taxonomy)},
        {"generator",
         {{"d", generator.d},
          {"class_counts", generator.class_counts},
          {"alpha", generator.alpha},
          {"separation", generator.separation},
          {"bag_min", generator.bag_min},
          {"bag_max", generator.bag_max},
          {"split_ratios", generator.split_ratios},
          {"mixed_pairs_per_combo", generator.mixed_pairs_per_combo},
          {"mixed_frac_min", generator.mixed_frac_min},
          {"mixed_frac_max", generator.mixed_frac_max},
          {"mixed_pairs", pairs}}},
        {"remix",
         {{"beta_min", trainer.remix.beta_min},
          {"beta_max", trainer.remix.beta_max},
          {"min_bag_size", trainer.remix.min_bag_size},
          {"tau", trainer.remix.tau},
          {"remix_probability", trainer.remix.remix_probability}}},
        {"trainer",
         {{"lr", trainer.adam.lr},
          {"beta1", trainer.adam.beta1},
          {"beta2", trainer.adam.beta2},
          {"eps", trainer.adam.eps},
          {"epochs", trainer.epochs},
          {"attention_width", trainer.attention_width},
          {"gate_subsite_in_training", trainer.gate_subsite_in_training},
          {"uhd_literal_kl", trainer.loss_flags.uhd_literal_kl}}},
        {"ablation",
         {{"use_iha", trainer.loss_flags.use_iha},
          {"use_uhd", trainer.loss_flags.use_uhd},
          {"use_subsite", trainer.use_subsite},
          {"use_remix", trainer.use_remix}}},
    };
    return j.dump(2);
}

}  // namespace hiermil
