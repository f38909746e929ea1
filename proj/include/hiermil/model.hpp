#pragma once
// Two-phase MIL predictor: one gated-attention encoder plus linear softmax
// head per hierarchy level. The fine head reserves three input slots for the
// subsite one-hot; they are zeroed unless the coarse argmax is Serrated, so
// the input width never changes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "hiermil/data.hpp"
#include "hiermil/tape.hpp"
#include "hiermil/taxonomy.hpp"
#include "hiermil/tensor.hpp"

namespace hiermil {

struct ModelParams {
    int d = 0;  // instance feature width
    int a = 0;  // attention width

    // Per level: attention (V, U: d x a; w: a x 1) and head (W + bias).
    Tensor2 v1, u1, w1, head1_w, head1_b;  // head1_w: d x 3
    Tensor2 v2, u2, w2, head2_w, head2_b;  // head2_w: (d+3) x 7

    // Stable iteration order shared by Adam state and the checkpoint format.
    std::vector<std::pair<const char*, Tensor2*>> named_tensors();
    std::vector<std::pair<const char*, const Tensor2*>> named_tensors() const;
};

// Uniform init in ±1/sqrt(fan-in), zero biases, deterministic per seed.
ModelParams init_params(int d, int a, std::uint64_t seed);

enum class GateMode : std::uint8_t {
    Auto,         // open iff argmax(coarse) == Serrated
    ForceClosed,  // subsite ablation
    ForceOpen,    // used by tests that pin the gate
};

struct EncodeResult {
    std::vector<double> pooled;     // d
    std::vector<double> attention;  // n, sums to 1
};

// Model outputs: one distribution per hierarchy level.
struct ProbPair {
    std::array<double, kNumCoarse> coarse{};
    std::array<double, kNumFine> fine{};

    // Validating constructor for dynamically sized inputs.
    static ProbPair from_vectors(const std::vector<double>& coarse,
                                 const std::vector<double>& fine);
};

struct PredictResult {
    ProbPair probs;
    EncodeResult coarse_encode;
    EncodeResult fine_encode;
    bool gate_open = false;
    std::array<double, 3> subsite_block{};  // what the fine head actually saw
};

EncodeResult encode(const ModelParams& params, Level level, const Bag& bag);

PredictResult predict(const ModelParams& params, const Bag& bag, GateMode gate = GateMode::Auto);

// Tape-building surface used by the trainer (and the gradient checks).
struct ModelTapeRefs {
    Tape::Ref v1, u1, w1, head1_w, head1_b;
    Tape::Ref v2, u2, w2, head2_w, head2_b;

    std::vector<Tape::Ref> all() const {
        return {v1, u1, w1, head1_w, head1_b, v2, u2, w2, head2_w, head2_b};
    }
};

struct ForwardRefs {
    Tape::Ref coarse_probs;  // 1 x 3
    Tape::Ref fine_probs;    // 1 x 7
    Tape::Ref att1, att2;    // 1 x n
    Tape::Ref pooled1, pooled2;
    bool gate_open = false;
    std::array<double, 3> subsite_block{};
};

ModelTapeRefs insert_params(Tape& tape, const ModelParams& params);
ForwardRefs build_forward(Tape& tape, const ModelTapeRefs& refs, const Bag& bag,
                          GateMode gate = GateMode::Auto);

// Checkpoint format, little-endian: magic "HMP1" | d u32 | a u32 | count u32 |
// per tensor: name_len u32, name bytes, rows u32, cols u32, float64 payload.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hiermil
