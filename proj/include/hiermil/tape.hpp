#pragma once
// Reverse-mode autodiff over Tensor2 values.
//
// Forward ops are evaluated eagerly and recorded; backward() replays the
// record once, accumulating an adjoint for every node. The op set is exactly
// what the two-head MIL model and its losses need — nothing speculative.
//
// Values flowing through log() are clamped below at 1e-12 inside the log
// only; normalizations are never clamped.

#include <cstdint>
#include <vector>

#include "hiermil/tensor.hpp"

namespace hiermil {

class Tape {
public:
    using Ref = std::int32_t;

    static constexpr double kLogClamp = 1e-12;

    // Leaves are parameters and constants alike; adjoints are computed for
    // all of them and callers read the ones they care about.
    Ref leaf(Tensor2 v);

    Ref matmul(Ref a, Ref b);
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);            // elementwise
    Ref scale(Ref a, double c);
    Ref add_rowvec(Ref a, Ref b);     // a: n x k, b: 1 x k broadcast over rows
    Ref transpose(Ref a);
    Ref tanh(Ref a);
    Ref sigmoid(Ref a);
    Ref logp(Ref a);                  // log(max(x, kLogClamp))
    Ref exp(Ref a);
    Ref softmax_rows(Ref a);
    Ref sum_all(Ref a);               // 1x1
    Ref dot_all(Ref a, Ref b);        // 1x1, sum(a .* b)
    Ref concat_cols(Ref a, Ref b);    // n x p, n x q -> n x (p+q)
    Ref div_scalar(Ref a, Ref s);     // s is a 1x1 node

    Ref linear(Ref x, Ref w, Ref b) { return add_rowvec(matmul(x, w), b); }

    const Tensor2& value(Ref r) const { return nodes_[check(r)].value; }
    double scalar_value(Ref r) const;

    // Contracts d(out)/d(node) with seed for every node. A tape can be
    // walked backward once; a second call is a state error.
    void backward(Ref out, const Tensor2& seed);
    void backward(Ref out);  // scalar out, seed = 1

    const Tensor2& grad(Ref r) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        leaf,
        matmul,
        add,
        sub,
        mul,
        scale,
        add_rowvec,
        transpose,
        tanh_fn,
        sigmoid_fn,
        logp_fn,
        exp_fn,
        softmax_rows,
        sum_all,
        dot_all,
        concat_cols,
        div_scalar,
    };

    struct Node {
        Op op;
        Ref a = -1;
        Ref b = -1;
        double c = 0.0;
        Tensor2 value;
    };

    Ref push(Op op, Ref a, Ref b, double c, Tensor2 value);
    std::size_t check(Ref r) const;

    std::vector<Node> nodes_;
    std::vector<Tensor2> grads_;
    bool backward_done_ = false;
};

}  // namespace hiermil
