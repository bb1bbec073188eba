// Small dense row-major matrix of doubles. Sized for the problem at hand
// (dimensions in the tens), so the API favors clarity over generality and
// routes its inner loops through the dispatched kernels.

#pragma once

#include <cstddef>
#include <vector>

namespace iclab {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    void fill(double v);
    void add_scaled(const Matrix& other, double alpha);  // *this += alpha * other

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// y = A x  /  y = A^T x ; x.size() checked against the matching dimension
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);
std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x);

// (d+c)x(d+c) matrix with alpha*I_d as the leading diagonal block and
// beta*I_c as the trailing one; the shape every constructed weight takes
Matrix blockdiag_scaled(std::size_t d, std::size_t c, double alpha, double beta);

Matrix identity(std::size_t n);

bool all_finite(const Matrix& a);
bool all_finite(const std::vector<double>& v);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);
double frobenius(const Matrix& a);
double norm2(const std::vector<double>& v);

}  // namespace iclab
