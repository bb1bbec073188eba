#include "iclab/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "iclab/kernels.hpp"

namespace iclab {

void Matrix::fill(double v) {
    for (auto& x : data_) x = v;
}

void Matrix::add_scaled(const Matrix& other, double alpha) {
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw std::invalid_argument("add_scaled: shape mismatch");
    kernels::axpy(data_.data(), alpha, other.data_.data(), data_.size());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    // c.row(i) += a(i,k) * b.row(k): row-major friendly, axpy inner loop
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            kernels::axpy(ci, a(i, k), b.row(k), b.cols());
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (x.size() != a.cols()) throw std::invalid_argument("matvec: shape mismatch");
    std::vector<double> y(a.rows());
    kernels::matvec(y.data(), a.data(), a.rows(), a.cols(), x.data());
    return y;
}

std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x) {
    if (x.size() != a.rows()) throw std::invalid_argument("matvec_t: shape mismatch");
    std::vector<double> y(a.cols());
    kernels::matvec_t(y.data(), a.data(), a.rows(), a.cols(), x.data());
    return y;
}

Matrix blockdiag_scaled(std::size_t d, std::size_t c, double alpha, double beta) {
    Matrix m(d + c, d + c);
    for (std::size_t i = 0; i < d; ++i) m(i, i) = alpha;
    for (std::size_t i = 0; i < c; ++i) m(d + i, d + i) = beta;
    return m;
}

Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool all_finite(const Matrix& a) {
    const double* p = a.data();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a.data()[i] - b.data()[i]);
        if (d > m) m = d;
    }
    return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

double frobenius(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace iclab
