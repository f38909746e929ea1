#pragma once
// Dense row-major matrix of doubles plus the handful of free functions the
// model needs. Inner loops route through the kernels layer.

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace hiermil {

class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2 row(std::vector<double> v);  // 1 x n
    static Tensor2 col(std::vector<double> v);  // n x 1

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& vec() const { return data_; }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

// x*W + b with b broadcast over rows; b must have W.cols entries.
Tensor2 linear(const Tensor2& x, const Tensor2& w, const std::vector<double>& b);

// Numerically stable softmax (max subtraction). Throws on empty input.
std::vector<double> softmax(const std::vector<double>& v);

// In-place softmax over each row of m.
void softmax_rows_inplace(Tensor2& m);

std::size_t argmax(const std::vector<double>& v);

}  // namespace hiermil
