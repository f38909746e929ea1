#pragma once
// Command implementations behind the `hiermil` binary. Kept as a library
// surface so tests can drive the commands without spawning processes.
// Exit codes: 0 success, 2 usage/config error, 3 runtime abort.

#include <cstdint>
#include <string>
#include <vector>

#include "hiermil/config.hpp"

namespace hiermil::cli {

void gen_data(const RunConfig& config);
void train_run(const RunConfig& config);
void eval_run(const RunConfig& config, const std::string& checkpoint,
              const std::string& split_name, const std::string& report_path);

struct RemixProbGrid {
    std::vector<std::int64_t> ns;
    std::vector<double> alphas;
    std::vector<double> betas;
};

// CSV with columns n,alpha,beta,p_success followed by one `#` summary line
// per n giving the fraction of feasible (alpha+beta<1) cells with
// p_success <= 0.99.
std::string remix_prob_csv(const RemixProbGrid& grid);

void ablate_run(const RunConfig& config);

// Full argv entry point: parses flags, merges them over --config, maps
// exceptions to exit codes.
int run(int argc, const char* const* argv);

}  // namespace hiermil::cli
