#include "hiermil/tensor.hpp"

#include <cmath>
#include <string>

#include "hiermil/errors.hpp"
#include "hiermil/kernels.hpp"

namespace hiermil {

namespace {

std::string shape_str(const Tensor2& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Tensor2 out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in tensor literal");
        std::size_t j = 0;
        for (double v : row) out.at(i, j++) = v;
        ++i;
    }
    return out;
}

Tensor2 Tensor2::row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor2(1, n, std::move(v));
}

Tensor2 Tensor2::col(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor2(n, 1, std::move(v));
}

bool Tensor2::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
    }
    Tensor2 c(a.rows(), b.cols());
    const std::size_t k_dim = a.cols();
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* c_row = c.data() + i * n;
        for (std::size_t k = 0; k < k_dim; ++k) {
            kernels::axpy(a.at(i, k), b.data() + k * n, c_row, n);
        }
    }
    return c;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    }
    return t;
}

Tensor2 linear(const Tensor2& x, const Tensor2& w, const std::vector<double>& b) {
    if (x.cols() != w.rows()) {
        throw ShapeError("linear shape mismatch: x " + shape_str(x) + ", W " + shape_str(w));
    }
    if (b.size() != w.cols()) {
        throw ShapeError("linear bias length " + std::to_string(b.size()) + " != W cols " +
                         std::to_string(w.cols()));
    }
    Tensor2 out = matmul(x, w);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        kernels::add(out.data() + i * out.cols(), b.data(), out.data() + i * out.cols(),
                     out.cols());
    }
    return out;
}

std::vector<double> softmax(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("softmax of empty vector");
    const double m = kernels::max_value(v.data(), v.size());
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i] - m);
    const double z = kernels::sum(out.data(), out.size());
    kernels::scale(1.0 / z, out.data(), out.data(), out.size());
    return out;
}

void softmax_rows_inplace(Tensor2& m) {
    if (m.cols() == 0) throw std::invalid_argument("softmax of empty rows");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* row = m.data() + i * m.cols();
        const double mx = kernels::max_value(row, m.cols());
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] = std::exp(row[j] - mx);
        const double z = kernels::sum(row, m.cols());
        kernels::scale(1.0 / z, row, row, m.cols());
    }
}

std::size_t argmax(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;  // ties keep the earliest index
    }
    return best;
}

}  // namespace hiermil
