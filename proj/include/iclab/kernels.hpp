#pragma once

#include <cstddef>

// Dense double-precision primitives behind a runtime-dispatched backend.
//
// kernels::ref holds the portable scalar reference implementations; they
// define the semantics. kernels::avx2 holds AVX2+FMA variants compiled in
// their own TU and selected at startup when the CPU supports them (override
// with ICLAB_BACKEND=scalar|avx2 or force_backend()). The two backends are
// equivalence-tested against each other; they may differ by summation order,
// i.e. a few ulp, never more.

namespace iclab::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);
bool avx2_available();

// Force a backend for this process. Throws ValidationError if unsupported.
void force_backend(Backend b);

// ---------- dispatched primitives ----------

double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);   // y += alpha*x
void scale(double* x, double alpha, std::size_t n);                   // x *= alpha
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);                     // n >= 1
void exp_inplace(double* x, std::size_t n);                           // x[i] = exp(x[i])

// Row-major matrix primitives.
void matvec(double* y, const double* a, std::size_t rows, std::size_t cols,
            const double* x);                                          // y = A x
void matvec_t(double* y, const double* a, std::size_t rows, std::size_t cols,
              const double* x);                                        // y = A^T x
void outer_acc(double* a, double alpha, const double* u, std::size_t m,
               const double* v, std::size_t n);                        // A += alpha u v^T

// ---------- scalar reference ----------

namespace ref {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
void exp_inplace(double* x, std::size_t n);
void matvec(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x);
void matvec_t(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x);
void outer_acc(double* a, double alpha, const double* u, std::size_t m,
               const double* v, std::size_t n);
}  // namespace ref

// ---------- avx2 variants (stubs when the TU was built without AVX2) ----------

namespace avx2 {
bool compiled();
double dot(const double* a, const double* b, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
void exp_inplace(double* x, std::size_t n);
void matvec(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x);
void matvec_t(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x);
void outer_acc(double* a, double alpha, const double* u, std::size_t m,
               const double* v, std::size_t n);
}  // namespace avx2

}  // namespace iclab::kernels
