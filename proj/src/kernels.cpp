#include "iclab/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "iclab/errors.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define ICLAB_X86 1
#endif

namespace iclab::kernels {

// ---------- scalar reference ----------

namespace ref {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double max_value(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

void exp_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

void matvec(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x) {
    for (std::size_t i = 0; i < rows; ++i) y[i] = dot(a + i * cols, x, cols);
}

void matvec_t(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x) {
    std::memset(y, 0, cols * sizeof(double));
    for (std::size_t i = 0; i < rows; ++i) axpy(y, x[i], a + i * cols, cols);
}

void outer_acc(double* a, double alpha, const double* u, std::size_t m,
               const double* v, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) axpy(a + i * n, alpha * u[i], v, n);
}

}  // namespace ref

// ---------- dispatch ----------

namespace {

struct Vtable {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double*, double, const double*, std::size_t);
    void (*scale)(double*, double, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_value)(const double*, std::size_t);
    void (*exp_inplace)(double*, std::size_t);
    void (*matvec)(double*, const double*, std::size_t, std::size_t, const double*);
    void (*matvec_t)(double*, const double*, std::size_t, std::size_t, const double*);
    void (*outer_acc)(double*, double, const double*, std::size_t, const double*, std::size_t);
};

constexpr Vtable kScalarVt = {ref::dot,     ref::axpy,     ref::scale,
                              ref::sum,     ref::max_value, ref::exp_inplace,
                              ref::matvec,  ref::matvec_t, ref::outer_acc};

constexpr Vtable kAvx2Vt = {avx2::dot,    avx2::axpy,     avx2::scale,
                            avx2::sum,    avx2::max_value, avx2::exp_inplace,
                            avx2::matvec, avx2::matvec_t, avx2::outer_acc};

bool cpu_has_avx2() {
#if defined(ICLAB_X86) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct Dispatch {
    Backend backend;
    const Vtable* vt;
    Dispatch() {
        backend = Backend::scalar;
        if (avx2_available()) backend = Backend::avx2;
        if (const char* env = std::getenv("ICLAB_BACKEND")) {
            if (std::strcmp(env, "scalar") == 0) backend = Backend::scalar;
            else if (std::strcmp(env, "avx2") == 0 && avx2_available()) backend = Backend::avx2;
        }
        vt = backend == Backend::avx2 ? &kAvx2Vt : &kScalarVt;
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

bool avx2_available() { return avx2::compiled() && cpu_has_avx2(); }

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
    return b == Backend::avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_available())
        throw ValidationError("avx2 backend requested but not available on this CPU/build");
    dispatch().backend = b;
    dispatch().vt = b == Backend::avx2 ? &kAvx2Vt : &kScalarVt;
}

double dot(const double* a, const double* b, std::size_t n) { return dispatch().vt->dot(a, b, n); }
void axpy(double* y, double alpha, const double* x, std::size_t n) { dispatch().vt->axpy(y, alpha, x, n); }
void scale(double* x, double alpha, std::size_t n) { dispatch().vt->scale(x, alpha, n); }
double sum(const double* x, std::size_t n) { return dispatch().vt->sum(x, n); }
double max_value(const double* x, std::size_t n) { return dispatch().vt->max_value(x, n); }
void exp_inplace(double* x, std::size_t n) { dispatch().vt->exp_inplace(x, n); }
void matvec(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x) {
    dispatch().vt->matvec(y, a, rows, cols, x);
}
void matvec_t(double* y, const double* a, std::size_t rows, std::size_t cols, const double* x) {
    dispatch().vt->matvec_t(y, a, rows, cols, x);
}
void outer_acc(double* a, double alpha, const double* u, std::size_t m,
               const double* v, std::size_t n) {
    dispatch().vt->outer_acc(a, alpha, u, m, v, n);
}

}  // namespace iclab::kernels
