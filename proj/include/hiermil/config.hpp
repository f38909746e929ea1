#pragma once
// Run configuration: one JSON document covering taxonomy overrides, the
// generator, remix, trainer and ablation flags. Command-line flags override
// file values; the merged effective config is persisted next to run outputs.

#include <cstdint>
#include <string>

#include "hiermil/data.hpp"
#include "hiermil/taxonomy.hpp"
#include "hiermil/trainer.hpp"

namespace hiermil {

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    std::string data_dir;  // dataset directory (defaults to out_dir)

    Taxonomy taxonomy;
    GenConfig generator;
    TrainConfig trainer;

    std::string effective_data_dir() const { return data_dir.empty() ? out_dir : data_dir; }

    static RunConfig from_json_text(const std::string& text);
    static RunConfig load(const std::string& path);
    std::string to_json_text() const;  // stable, pretty-printed
};

}  // namespace hiermil
