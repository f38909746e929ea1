#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "hiermil/errors.hpp"
#include "hiermil/rng.hpp"
#include "hiermil/tape.hpp"
#include "hiermil/tensor.hpp"

using namespace hiermil;

namespace {

Tensor2 random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -2.0, double hi = 2.0) {
    Tensor2 t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// Builds a scalar output from input leaves on a fresh tape.
using Builder = std::function<Tape::Ref(Tape&, const std::vector<Tape::Ref>&)>;

double eval_value(const std::vector<Tensor2>& inputs, const Builder& build) {
    Tape tape;
    std::vector<Tape::Ref> refs;
    refs.reserve(inputs.size());
    for (const auto& t : inputs) refs.push_back(tape.leaf(t));
    return tape.scalar_value(build(tape, refs));
}

std::vector<Tensor2> eval_grads(const std::vector<Tensor2>& inputs, const Builder& build) {
    Tape tape;
    std::vector<Tape::Ref> refs;
    refs.reserve(inputs.size());
    for (const auto& t : inputs) refs.push_back(tape.leaf(t));
    tape.backward(build(tape, refs));
    std::vector<Tensor2> out;
    out.reserve(refs.size());
    for (Tape::Ref r : refs) out.push_back(tape.grad(r));
    return out;
}

// Central finite differences against the analytic gradient; relative error
// below 1e-4 with an absolute floor of 1e-8 for near-zero gradients.
void fd_check(const std::vector<Tensor2>& inputs, const Builder& build) {
    const double h = 1e-5;
    const auto grads = eval_grads(inputs, build);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            auto plus = inputs;
            auto minus = inputs;
            plus[t].data()[i] += h;
            minus[t].data()[i] -= h;
            const double fd = (eval_value(plus, build) - eval_value(minus, build)) / (2.0 * h);
            const double analytic = grads[t].data()[i];
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
            CHECK(std::abs(analytic - fd) / denom < 1e-4);
        }
    }
}

// Contract a tensor output to a scalar with fixed weights so every entry of
// the adjoint is exercised. The weights must be created outside the builder:
// fd_check re-runs the builder and the value function has to be stable.
Tape::Ref contract(Tape& tape, Tape::Ref x, const Tensor2& weights) {
    return tape.dot_all(x, tape.leaf(weights));
}

}  // namespace

TEST_CASE("linear: identity, bias and scalar cases") {
    const Tensor2 eye = Tensor2::from_rows({{1, 0}, {0, 1}});
    const Tensor2 w = Tensor2::from_rows({{1, 2}, {3, 4}});
    const Tensor2 r1 = linear(eye, w, {0, 0});
    CHECK(r1.at(0, 0) == 1.0);
    CHECK(r1.at(0, 1) == 2.0);
    CHECK(r1.at(1, 0) == 3.0);
    CHECK(r1.at(1, 1) == 4.0);

    const Tensor2 r2 = linear(Tensor2::from_rows({{1, 1}}), eye, {5, 5});
    CHECK(r2.at(0, 0) == 6.0);
    CHECK(r2.at(0, 1) == 6.0);

    const Tensor2 r3 = linear(Tensor2::from_rows({{2}}), Tensor2::from_rows({{3}}), {-6});
    CHECK(r3.at(0, 0) == 0.0);

    CHECK_THROWS_AS(linear(Tensor2(2, 3), Tensor2(2, 3), {0, 0, 0}), ShapeError);
    CHECK_THROWS_AS(linear(Tensor2(2, 3), Tensor2(3, 2), {0, 0, 0}), ShapeError);
}

TEST_CASE("softmax: symmetry, stability, closed form") {
    const auto u = softmax({0.0, 0.0, 0.0});
    for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const auto big = softmax({1000.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(big[1] < 1e-300);

    // softmax(log 1, log 2, log 3) = (1, 2, 3) / 6
    const auto w = softmax({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(w[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

    CHECK_THROWS_AS(softmax({}), std::invalid_argument);
}

TEST_CASE("softmax invariants on random inputs") {
    Rng rng(11);
    for (int it = 0; it < 50; ++it) {
        const std::size_t n = 1 + rng.next_below(9);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-30.0, 30.0);
        const auto s = softmax(v);
        double total = 0.0;
        for (double x : s) {
            CHECK(x > 0.0);
            CHECK(x < 1.0 + 1e-15);
            total += x;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);

        // shift invariance
        auto shifted = v;
        for (auto& x : shifted) x += 17.5;
        const auto s2 = softmax(shifted);
        for (std::size_t i = 0; i < n; ++i) CHECK(s[i] == doctest::Approx(s2[i]).epsilon(1e-12));
    }
}

TEST_CASE("grad: identity and square") {
    {
        Tape tape;
        const auto x = tape.leaf(Tensor2::from_rows({{3.0}}));
        tape.backward(x);
        CHECK(tape.grad(x).at(0, 0) == 1.0);
    }
    {
        Tape tape;
        const auto x = tape.leaf(Tensor2::from_rows({{3.0}}));
        const auto y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x).at(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
    }
}

TEST_CASE("tape cannot be walked backward twice") {
    Tape tape;
    const auto x = tape.leaf(Tensor2::from_rows({{1.0}}));
    const auto y = tape.mul(x, x);
    tape.backward(y);
    Tensor2 seed(1, 1);
    seed.data()[0] = 1.0;
    CHECK_THROWS_AS(tape.backward(y, seed), StateError);
    // grads also unavailable before backward
    Tape fresh;
    const auto z = fresh.leaf(Tensor2(1, 1));
    CHECK_THROWS_AS(fresh.grad(z), StateError);
}

TEST_CASE("backward rejects a seed of the wrong shape") {
    Tape tape;
    const auto x = tape.leaf(Tensor2(2, 2));
    CHECK_THROWS_AS(tape.backward(x, Tensor2(1, 1)), ShapeError);
}

TEST_CASE("per-primitive gradients match finite differences on 100 random inputs") {
    Rng rng(2024);
    for (int it = 0; it < 100; ++it) {
        // matmul
        {
            const Tensor2 cw = random_tensor(rng, 2, 2);
            fd_check({random_tensor(rng, 2, 3), random_tensor(rng, 3, 2)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.matmul(in[0], in[1]), cw);
                     });
        }
        // add / sub / mul chained
        {
            const Tensor2 cw = random_tensor(rng, 2, 3);
            fd_check({random_tensor(rng, 2, 3), random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.mul(t.add(in[0], in[1]), t.sub(in[0], in[1])), cw);
                     });
        }
        // scale
        {
            const Tensor2 cw = random_tensor(rng, 2, 3);
            fd_check({random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.scale(in[0], -1.3), cw);
                     });
        }
        // add_rowvec
        {
            const Tensor2 cw = random_tensor(rng, 3, 2);
            fd_check({random_tensor(rng, 3, 2), random_tensor(rng, 1, 2)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.add_rowvec(in[0], in[1]), cw);
                     });
        }
        // transpose
        {
            const Tensor2 cw = random_tensor(rng, 3, 2);
            fd_check({random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.transpose(in[0]), cw);
                     });
        }
        // tanh / sigmoid / exp / logp
        {
            const Tensor2 cw = random_tensor(rng, 2, 3);
            fd_check({random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.tanh(in[0]), cw);
                     });
            fd_check({random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.sigmoid(in[0]), cw);
                     });
            fd_check({random_tensor(rng, 2, 3)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.exp(in[0]), cw);
                     });
            fd_check({random_tensor(rng, 2, 3, 0.1, 3.0)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.logp(in[0]), cw);
                     });
        }
        // softmax_rows
        {
            const Tensor2 cw = random_tensor(rng, 2, 4);
            fd_check({random_tensor(rng, 2, 4)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.softmax_rows(in[0]), cw);
                     });
        }
        // sum_all / dot_all
        fd_check({random_tensor(rng, 2, 3)}, [&](Tape& t, const std::vector<Tape::Ref>& in) {
            return t.sum_all(in[0]);
        });
        fd_check({random_tensor(rng, 2, 3), random_tensor(rng, 2, 3)},
                 [&](Tape& t, const std::vector<Tape::Ref>& in) {
                     return t.dot_all(in[0], in[1]);
                 });
        // concat_cols
        {
            const Tensor2 cw = random_tensor(rng, 2, 5);
            fd_check({random_tensor(rng, 2, 3), random_tensor(rng, 2, 2)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.concat_cols(in[0], in[1]), cw);
                     });
        }
        // div_scalar with the divisor away from zero
        {
            const Tensor2 cw = random_tensor(rng, 2, 3);
            fd_check({random_tensor(rng, 2, 3), random_tensor(rng, 1, 1, 0.5, 2.0)},
                     [&](Tape& t, const std::vector<Tape::Ref>& in) {
                         return contract(t, t.div_scalar(in[0], in[1]), cw);
                     });
        }
    }
}

TEST_CASE("five-parameter composite of linear+tanh+softmax+log matches finite differences") {
    Rng rng(77);
    const Tensor2 x_const = random_tensor(rng, 1, 2);
    for (int it = 0; it < 20; ++it) {
        // 4 weight parameters + 1 bias parameter
        const std::vector<Tensor2> params{random_tensor(rng, 2, 2), random_tensor(rng, 1, 1)};
        const Tensor2 cw = random_tensor(rng, 1, 2);
        auto build = [&](Tape& t, const std::vector<Tape::Ref>& in) {
            const auto h = t.tanh(t.matmul(t.leaf(x_const), in[0]));
            const auto s = t.softmax_rows(h);
            return t.add(contract(t, t.logp(s), cw), in[1]);
        };
        fd_check(params, build);
    }
}

TEST_CASE("forward evaluation is pure: bitwise-identical on repeat") {
    Rng rng(31);
    const Tensor2 a = random_tensor(rng, 3, 3);
    const Tensor2 b = random_tensor(rng, 3, 3);
    auto run = [&]() {
        Tape tape;
        const auto out = tape.softmax_rows(tape.matmul(tape.tanh(tape.leaf(a)), tape.leaf(b)));
        return tape.value(out);
    };
    const Tensor2 v1 = run();
    const Tensor2 v2 = run();
    CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * 8) == 0);
}

TEST_CASE("tensor shape errors") {
    CHECK_THROWS_AS(matmul(Tensor2(2, 3), Tensor2(2, 3)), ShapeError);
    CHECK_THROWS_AS(Tensor2(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    Tape tape;
    const auto a = tape.leaf(Tensor2(2, 3));
    const auto b = tape.leaf(Tensor2(3, 3));
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.dot_all(a, b), ShapeError);
}
