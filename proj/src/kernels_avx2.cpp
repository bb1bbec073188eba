// AVX2+FMA kernel variants. This TU is the only one compiled with -mavx2;
// callers reach it through the runtime dispatch in kernels.cpp.

#include "iclab/kernels.hpp"

#include <cmath>
#include <cstring>

#if defined(__AVX2__) && defined(__FMA__)
#define ICLAB_AVX2_TU 1
#include <immintrin.h>
#endif

namespace iclab::kernels::avx2 {

#ifdef ICLAB_AVX2_TU

bool compiled() { return true; }

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp for 4 doubles. Range reduction x = n*ln2 + r, |r| <= ln2/2, then the
// rational approximation e^r = 1 + 2*r*P(r^2) / (Q(r^2) - r*P(r^2)) and a
// two-step 2^n rescale so results stay correct down into the subnormals.
// Agrees with std::exp to ~2 ulp over the normal range.
inline __m256d exp4(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

    const __m256d overflow = _mm256_set1_pd(709.782712893384);
    const __m256d underflow = _mm256_set1_pd(-745.5);

    __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    __m256d z = _mm256_mul_pd(r, r);
    __m256d px = _mm256_fmadd_pd(p0, z, p1);
    px = _mm256_fmadd_pd(px, z, p2);
    px = _mm256_mul_pd(px, r);
    __m256d qx = _mm256_fmadd_pd(q0, z, q1);
    qx = _mm256_fmadd_pd(qx, z, q2);
    qx = _mm256_fmadd_pd(qx, z, q3);
    __m256d er = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
    er = _mm256_fmadd_pd(_mm256_set1_pd(2.0), er, _mm256_set1_pd(1.0));

    // 2^n via exponent bits, split n = n1 + n2 to reach subnormal results
    __m128i ni = _mm256_cvtpd_epi32(n);
    __m128i n1 = _mm_srai_epi32(ni, 1);
    __m128i n2 = _mm_sub_epi32(ni, n1);
    const __m256i bias = _mm256_set1_epi64x(1023);
    __m256i e1 = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n1), bias), 52);
    __m256i e2 = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(n2), bias), 52);
    er = _mm256_mul_pd(er, _mm256_castsi256_pd(e1));
    er = _mm256_mul_pd(er, _mm256_castsi256_pd(e2));

    __m256d hi_mask = _mm256_cmp_pd(x, overflow, _CMP_GT_OQ);
    __m256d lo_mask = _mm256_cmp_pd(x, underflow, _CMP_LT_OQ);
    er = _mm256_blendv_pd(er, _mm256_set1_pd(HUGE_VAL), hi_mask);
    er = _mm256_blendv_pd(er, _mm256_setzero_pd(), lo_mask);
    return er;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double* x, double alpha, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= alpha;
}

double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double max_value(const double* x, std::size_t n) {
    std::size_t i = 0;
    double m;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
        __m128d lo = _mm256_castpd256_pd128(acc);
        __m128d hi = _mm256_extractf128_pd(acc, 1);
        lo = _mm_max_pd(lo, hi);
        __m128d sh = _mm_unpackhi_pd(lo, lo);
        m = _mm_cvtsd_f64(_mm_max_sd(lo, sh));
    } else {
        m = x[0];
        i = 1;
    }
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

void exp_inplace(double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, exp4(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] = std::exp(x[i]);
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

#else  // !ICLAB_AVX2_TU

bool compiled() { return false; }

double dot(const double*, const double*, std::size_t) { return 0.0; }
void axpy(double*, double, const double*, std::size_t) {}
void scale(double*, double, std::size_t) {}
double sum(const double*, std::size_t) { return 0.0; }
double max_value(const double*, std::size_t) { return 0.0; }
void exp_inplace(double*, std::size_t) {}
void matvec(double*, const double*, std::size_t, std::size_t, const double*) {}
void matvec_t(double*, const double*, std::size_t, std::size_t, const double*) {}
void outer_acc(double*, double, const double*, std::size_t, const double*, std::size_t) {}

#endif

}  // namespace iclab::kernels::avx2
