#include "hiermil/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"

namespace hiermil {

namespace {

constexpr char kCkptMagic[4] = {'H', 'M', 'P', '1'};

Tensor2 uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor2 t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw FormatError("truncated checkpoint", buf.size());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
}

double get_f64(const std::string& buf, std::size_t& pos) {
    if (pos + 8 > buf.size()) throw FormatError("truncated checkpoint", buf.size());
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

std::vector<std::pair<const char*, Tensor2*>> ModelParams::named_tensors() {
    return {
        {"v1", &v1},           {"u1", &u1},           {"w1", &w1},
        {"head1_w", &head1_w}, {"head1_b", &head1_b}, {"v2", &v2},
        {"u2", &u2},           {"w2", &w2},           {"head2_w", &head2_w},
        {"head2_b", &head2_b},
    };
}

std::vector<std::pair<const char*, const Tensor2*>> ModelParams::named_tensors() const {
    auto mut = const_cast<ModelParams*>(this)->named_tensors();
    std::vector<std::pair<const char*, const Tensor2*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

ModelParams init_params(int d, int a, std::uint64_t seed) {
    if (d < 2 || a < 1) throw ConfigError("model dims must satisfy d >= 2, a >= 1");
    Rng rng(derive_seed(seed, 0x90DE1ull));
    ModelParams p;
    p.d = d;
    p.a = a;
    p.v1 = uniform_init(d, a, rng);
    p.u1 = uniform_init(d, a, rng);
    p.w1 = uniform_init(a, 1, rng);
    p.head1_w = uniform_init(d, kNumCoarse, rng);
    p.head1_b = Tensor2(1, kNumCoarse);
    p.v2 = uniform_init(d, a, rng);
    p.u2 = uniform_init(d, a, rng);
    p.w2 = uniform_init(a, 1, rng);
    p.head2_w = uniform_init(d + 3, kNumFine, rng);
    p.head2_b = Tensor2(1, kNumFine);
    return p;
}

ProbPair ProbPair::from_vectors(const std::vector<double>& coarse,
                                const std::vector<double>& fine) {
    if (coarse.size() != kNumCoarse || fine.size() != kNumFine) {
        throw ShapeError("ProbPair requires 3 coarse and 7 fine probabilities");
    }
    ProbPair p;
    std::copy(coarse.begin(), coarse.end(), p.coarse.begin());
    std::copy(fine.begin(), fine.end(), p.fine.begin());
    return p;
}

ModelTapeRefs insert_params(Tape& tape, const ModelParams& params) {
    ModelTapeRefs r;
    r.v1 = tape.leaf(params.v1);
    r.u1 = tape.leaf(params.u1);
    r.w1 = tape.leaf(params.w1);
    r.head1_w = tape.leaf(params.head1_w);
    r.head1_b = tape.leaf(params.head1_b);
    r.v2 = tape.leaf(params.v2);
    r.u2 = tape.leaf(params.u2);
    r.w2 = tape.leaf(params.w2);
    r.head2_w = tape.leaf(params.head2_w);
    r.head2_b = tape.leaf(params.head2_b);
    return r;
}

namespace {

// Gated attention pooling: e_k = w^T (tanh(V z_k) .* sigmoid(U z_k)),
// attention = softmax(e), pooled = sum_k attention_k z_k.
struct EncodeRefs {
    Tape::Ref attention;  // 1 x n
    Tape::Ref pooled;     // 1 x d
};

EncodeRefs build_encode(Tape& tape, Tape::Ref features, Tape::Ref v, Tape::Ref u, Tape::Ref w) {
    const Tape::Ref gate = tape.mul(tape.tanh(tape.matmul(features, v)),
                                    tape.sigmoid(tape.matmul(features, u)));
    const Tape::Ref scores = tape.transpose(tape.matmul(gate, w));  // 1 x n
    const Tape::Ref attention = tape.softmax_rows(scores);
    const Tape::Ref pooled = tape.matmul(attention, features);
    return {attention, pooled};
}

}  // namespace

ForwardRefs build_forward(Tape& tape, const ModelTapeRefs& refs, const Bag& bag, GateMode gate) {
    const Tape::Ref features = tape.leaf(bag.features);

    const EncodeRefs enc1 = build_encode(tape, features, refs.v1, refs.u1, refs.w1);
    const Tape::Ref logits1 = tape.linear(enc1.pooled, refs.head1_w, refs.head1_b);
    const Tape::Ref coarse = tape.softmax_rows(logits1);

    bool gate_open;
    switch (gate) {
        case GateMode::ForceClosed: gate_open = false; break;
        case GateMode::ForceOpen: gate_open = true; break;
        default:
            gate_open = argmax(tape.value(coarse).vec()) ==
                        static_cast<std::size_t>(CoarseClass::Serrated);
    }
    // The gate is a constant within this forward pass: no gradient flows
    // through the subsite block.
    std::array<double, 3> block{0.0, 0.0, 0.0};
    if (gate_open) block = subsite_one_hot(bag.subsite);

    const EncodeRefs enc2 = build_encode(tape, features, refs.v2, refs.u2, refs.w2);
    const Tape::Ref block_leaf = tape.leaf(Tensor2::row({block[0], block[1], block[2]}));
    const Tape::Ref fine_in = tape.concat_cols(enc2.pooled, block_leaf);
    const Tape::Ref logits2 = tape.linear(fine_in, refs.head2_w, refs.head2_b);
    const Tape::Ref fine = tape.softmax_rows(logits2);

    ForwardRefs out;
    out.coarse_probs = coarse;
    out.fine_probs = fine;
    out.att1 = enc1.attention;
    out.att2 = enc2.attention;
    out.pooled1 = enc1.pooled;
    out.pooled2 = enc2.pooled;
    out.gate_open = gate_open;
    out.subsite_block = block;
    return out;
}

EncodeResult encode(const ModelParams& params, Level level, const Bag& bag) {
    if (bag.dim() != static_cast<std::size_t>(params.d)) {
        throw ShapeError("bag feature width " + std::to_string(bag.dim()) +
                         " does not match model d=" + std::to_string(params.d));
    }
    Tape tape;
    const Tape::Ref features = tape.leaf(bag.features);
    const bool coarse = level == Level::Coarse;
    const EncodeRefs enc = build_encode(tape, features, tape.leaf(coarse ? params.v1 : params.v2),
                                        tape.leaf(coarse ? params.u1 : params.u2),
                                        tape.leaf(coarse ? params.w1 : params.w2));
    return EncodeResult{tape.value(enc.pooled).vec(), tape.value(enc.attention).vec()};
}

PredictResult predict(const ModelParams& params, const Bag& bag, GateMode gate) {
    if (bag.dim() != static_cast<std::size_t>(params.d)) {
        throw ShapeError("bag feature width " + std::to_string(bag.dim()) +
                         " does not match model d=" + std::to_string(params.d));
    }
    Tape tape;
    const ModelTapeRefs refs = insert_params(tape, params);
    const ForwardRefs fwd = build_forward(tape, refs, bag, gate);

    PredictResult out;
    const auto& c = tape.value(fwd.coarse_probs).vec();
    const auto& f = tape.value(fwd.fine_probs).vec();
    std::copy(c.begin(), c.end(), out.probs.coarse.begin());
    std::copy(f.begin(), f.end(), out.probs.fine.begin());
    out.coarse_encode = EncodeResult{tape.value(fwd.pooled1).vec(), tape.value(fwd.att1).vec()};
    out.fine_encode = EncodeResult{tape.value(fwd.pooled2).vec(), tape.value(fwd.att2).vec()};
    out.gate_open = fwd.gate_open;
    out.subsite_block = fwd.subsite_block;
    return out;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::string out;
    out.append(kCkptMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(params.d));
    put_u32(out, static_cast<std::uint32_t>(params.a));
    const auto tensors = params.named_tensors();
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        const std::string n(name);
        put_u32(out, static_cast<std::uint32_t>(n.size()));
        out.append(n);
        put_u32(out, static_cast<std::uint32_t>(t->rows()));
        put_u32(out, static_cast<std::uint32_t>(t->cols()));
        for (std::size_t i = 0; i < t->size(); ++i) put_f64(out, t->data()[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open checkpoint for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError("short write: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 4 || std::memcmp(buf.data(), kCkptMagic, 4) != 0) {
        throw FormatError("bad checkpoint magic", 0);
    }
    std::size_t pos = 4;
    const int d = static_cast<int>(get_u32(buf, pos));
    const int a = static_cast<int>(get_u32(buf, pos));
    const std::uint32_t count = get_u32(buf, pos);

    ModelParams params = init_params(d, a, 0);
    auto tensors = params.named_tensors();
    if (count != tensors.size()) throw FormatError("unexpected checkpoint tensor count", pos);

    for (auto& [name, t] : tensors) {
        const std::uint32_t name_len = get_u32(buf, pos);
        if (pos + name_len > buf.size()) throw FormatError("truncated checkpoint", buf.size());
        const std::string got(buf.data() + pos, name_len);
        pos += name_len;
        if (got != name) throw FormatError("unexpected tensor name: " + got, pos);
        const std::uint32_t rows = get_u32(buf, pos);
        const std::uint32_t cols = get_u32(buf, pos);
        if (rows != t->rows() || cols != t->cols()) {
            throw FormatError("tensor " + got + " has unexpected shape", pos);
        }
        for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = get_f64(buf, pos);
        if (!t->all_finite()) throw FormatError("non-finite parameter in " + got, pos);
    }
    return params;
}

}  // namespace hiermil
