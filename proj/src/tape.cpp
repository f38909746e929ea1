#include "hiermil/tape.hpp"

#include <cmath>
#include <string>

#include "hiermil/errors.hpp"
#include "hiermil/kernels.hpp"

namespace hiermil {

namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

}  // namespace

std::size_t Tape::check(Ref r) const {
    if (r < 0 || static_cast<std::size_t>(r) >= nodes_.size()) {
        throw StateError("tape ref out of range");
    }
    return static_cast<std::size_t>(r);
}

Tape::Ref Tape::push(Op op, Ref a, Ref b, double c, Tensor2 value) {
    if (backward_done_) throw StateError("tape already consumed by backward()");
    nodes_.push_back(Node{op, a, b, c, std::move(value)});
    return static_cast<Ref>(nodes_.size() - 1);
}

Tape::Ref Tape::leaf(Tensor2 v) { return push(Op::leaf, -1, -1, 0.0, std::move(v)); }

Tape::Ref Tape::matmul(Ref a, Ref b) {
    Tensor2 v = hiermil::matmul(value(a), value(b));
    return push(Op::matmul, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::add(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    require_same_shape(va, vb, "add");
    Tensor2 v(va.rows(), va.cols());
    kernels::add(va.data(), vb.data(), v.data(), v.size());
    return push(Op::add, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::sub(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    require_same_shape(va, vb, "sub");
    Tensor2 v(va.rows(), va.cols());
    kernels::sub(va.data(), vb.data(), v.data(), v.size());
    return push(Op::sub, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::mul(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    require_same_shape(va, vb, "mul");
    Tensor2 v(va.rows(), va.cols());
    kernels::mul(va.data(), vb.data(), v.data(), v.size());
    return push(Op::mul, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::scale(Ref a, double c) {
    const Tensor2& va = value(a);
    Tensor2 v(va.rows(), va.cols());
    kernels::scale(c, va.data(), v.data(), v.size());
    return push(Op::scale, a, -1, c, std::move(v));
}

Tape::Ref Tape::add_rowvec(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    if (vb.rows() != 1 || vb.cols() != va.cols()) {
        throw ShapeError("add_rowvec: bias must be 1x" + std::to_string(va.cols()));
    }
    Tensor2 v = va;
    for (std::size_t i = 0; i < v.rows(); ++i) {
        kernels::add(v.data() + i * v.cols(), vb.data(), v.data() + i * v.cols(), v.cols());
    }
    return push(Op::add_rowvec, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::transpose(Ref a) {
    return push(Op::transpose, a, -1, 0.0, hiermil::transpose(value(a)));
}

Tape::Ref Tape::tanh(Ref a) {
    Tensor2 v = value(a);
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = std::tanh(v.data()[i]);
    return push(Op::tanh_fn, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::sigmoid(Ref a) {
    Tensor2 v = value(a);
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = 1.0 / (1.0 + std::exp(-v.data()[i]));
    return push(Op::sigmoid_fn, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::logp(Ref a) {
    Tensor2 v = value(a);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.data()[i] = std::log(v.data()[i] > kLogClamp ? v.data()[i] : kLogClamp);
    }
    return push(Op::logp_fn, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::exp(Ref a) {
    Tensor2 v = value(a);
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = std::exp(v.data()[i]);
    return push(Op::exp_fn, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::softmax_rows(Ref a) {
    Tensor2 v = value(a);
    softmax_rows_inplace(v);
    return push(Op::softmax_rows, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::sum_all(Ref a) {
    const Tensor2& va = value(a);
    Tensor2 v(1, 1);
    v.data()[0] = kernels::sum(va.data(), va.size());
    return push(Op::sum_all, a, -1, 0.0, std::move(v));
}

Tape::Ref Tape::dot_all(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    require_same_shape(va, vb, "dot_all");
    Tensor2 v(1, 1);
    v.data()[0] = kernels::dot(va.data(), vb.data(), va.size());
    return push(Op::dot_all, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::concat_cols(Ref a, Ref b) {
    const Tensor2& va = value(a);
    const Tensor2& vb = value(b);
    if (va.rows() != vb.rows()) throw ShapeError("concat_cols: row mismatch");
    Tensor2 v(va.rows(), va.cols() + vb.cols());
    for (std::size_t i = 0; i < va.rows(); ++i) {
        for (std::size_t j = 0; j < va.cols(); ++j) v.at(i, j) = va.at(i, j);
        for (std::size_t j = 0; j < vb.cols(); ++j) v.at(i, va.cols() + j) = vb.at(i, j);
    }
    return push(Op::concat_cols, a, b, 0.0, std::move(v));
}

Tape::Ref Tape::div_scalar(Ref a, Ref s) {
    const Tensor2& vs = value(s);
    if (vs.rows() != 1 || vs.cols() != 1) throw ShapeError("div_scalar: divisor must be 1x1");
    const double sv = vs.data()[0];
    if (sv == 0.0) throw NumericError("div_scalar: division by zero");
    const Tensor2& va = value(a);
    Tensor2 v(va.rows(), va.cols());
    kernels::scale(1.0 / sv, va.data(), v.data(), v.size());
    return push(Op::div_scalar, a, s, 0.0, std::move(v));
}

double Tape::scalar_value(Ref r) const {
    const Tensor2& v = value(r);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar_value on non-1x1 node");
    return v.data()[0];
}

const Tensor2& Tape::grad(Ref r) const {
    if (!backward_done_) throw StateError("grad() before backward()");
    return grads_[check(r)];
}

void Tape::backward(Ref out) {
    Tensor2 seed(1, 1);
    seed.data()[0] = 1.0;
    backward(out, seed);
}

void Tape::backward(Ref out, const Tensor2& seed) {
    if (backward_done_) throw StateError("tape already consumed by backward()");
    const std::size_t out_idx = check(out);
    if (!seed.same_shape(nodes_[out_idx].value)) {
        throw ShapeError("backward seed shape does not match output");
    }
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.emplace_back(n.value.rows(), n.value.cols());
    grads_[out_idx] = seed;
    backward_done_ = true;

    for (std::size_t idx = out_idx + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        const Tensor2& g = grads_[idx];
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul: {
                // dA[i,k] += dot(G[i,:], B[k,:]);  dB[k,:] += A[i,k] * G[i,:]
                const Tensor2& a = nodes_[n.a].value;
                const Tensor2& b = nodes_[n.b].value;
                Tensor2& da = grads_[n.a];
                Tensor2& db = grads_[n.b];
                const std::size_t m = g.cols();
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    const double* g_row = g.data() + i * m;
                    for (std::size_t k = 0; k < a.cols(); ++k) {
                        da.at(i, k) += kernels::dot(g_row, b.data() + k * m, m);
                        kernels::axpy(a.at(i, k), g_row, db.data() + k * m, m);
                    }
                }
                break;
            }
            case Op::add:
                kernels::add(grads_[n.a].data(), g.data(), grads_[n.a].data(), g.size());
                kernels::add(grads_[n.b].data(), g.data(), grads_[n.b].data(), g.size());
                break;
            case Op::sub:
                kernels::add(grads_[n.a].data(), g.data(), grads_[n.a].data(), g.size());
                kernels::axpy(-1.0, g.data(), grads_[n.b].data(), g.size());
                break;
            case Op::mul:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    grads_[n.a].data()[i] += g.data()[i] * nodes_[n.b].value.data()[i];
                    grads_[n.b].data()[i] += g.data()[i] * nodes_[n.a].value.data()[i];
                }
                break;
            case Op::scale:
                kernels::axpy(n.c, g.data(), grads_[n.a].data(), g.size());
                break;
            case Op::add_rowvec: {
                kernels::add(grads_[n.a].data(), g.data(), grads_[n.a].data(), g.size());
                Tensor2& db = grads_[n.b];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    kernels::add(db.data(), g.data() + i * g.cols(), db.data(), g.cols());
                }
                break;
            }
            case Op::transpose: {
                Tensor2& da = grads_[n.a];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < g.cols(); ++j) da.at(j, i) += g.at(i, j);
                }
                break;
            }
            case Op::tanh_fn:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double y = n.value.data()[i];
                    grads_[n.a].data()[i] += g.data()[i] * (1.0 - y * y);
                }
                break;
            case Op::sigmoid_fn:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double y = n.value.data()[i];
                    grads_[n.a].data()[i] += g.data()[i] * y * (1.0 - y);
                }
                break;
            case Op::logp_fn:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = nodes_[n.a].value.data()[i];
                    grads_[n.a].data()[i] += g.data()[i] / (x > kLogClamp ? x : kLogClamp);
                }
                break;
            case Op::exp_fn:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    grads_[n.a].data()[i] += g.data()[i] * n.value.data()[i];
                }
                break;
            case Op::softmax_rows: {
                // per row: dx = y .* (g - <g, y>)
                Tensor2& da = grads_[n.a];
                const std::size_t cols = g.cols();
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double* y = n.value.data() + i * cols;
                    const double* gr = g.data() + i * cols;
                    const double gy = kernels::dot(gr, y, cols);
                    double* dx = da.data() + i * cols;
                    for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (gr[j] - gy);
                }
                break;
            }
            case Op::sum_all: {
                const double gv = g.data()[0];
                Tensor2& da = grads_[n.a];
                for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += gv;
                break;
            }
            case Op::dot_all: {
                const double gv = g.data()[0];
                kernels::axpy(gv, nodes_[n.b].value.data(), grads_[n.a].data(),
                              nodes_[n.a].value.size());
                kernels::axpy(gv, nodes_[n.a].value.data(), grads_[n.b].data(),
                              nodes_[n.b].value.size());
                break;
            }
            case Op::concat_cols: {
                Tensor2& da = grads_[n.a];
                Tensor2& db = grads_[n.b];
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < da.cols(); ++j) da.at(i, j) += g.at(i, j);
                    for (std::size_t j = 0; j < db.cols(); ++j) {
                        db.at(i, j) += g.at(i, da.cols() + j);
                    }
                }
                break;
            }
            case Op::div_scalar: {
                const double sv = nodes_[n.b].value.data()[0];
                kernels::axpy(1.0 / sv, g.data(), grads_[n.a].data(), g.size());
                // ds = -<g, y> / s
                const double gy = kernels::dot(g.data(), n.value.data(), g.size());
                grads_[n.b].data()[0] += -gy / sv;
                break;
            }
        }
    }
}

}  // namespace hiermil
