#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "iclab/kernels.hpp"
#include "iclab/rng.hpp"

using namespace iclab;
namespace k = iclab::kernels;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

// reductions may reassociate between backends; allow a few ulp relative to
// the magnitude actually summed
void check_close(double got, double want, double magnitude) {
    CHECK(std::fabs(got - want) <= 1e-13 * (magnitude + 1.0));
}

}  // namespace

TEST_CASE("scalar reference kernels match direct formulas") {
    Rng rng(11);
    auto a = rand_vec(rng, 13);
    auto b = rand_vec(rng, 13);

    double want_dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) want_dot += a[i] * b[i];
    CHECK(k::ref::dot(a.data(), b.data(), a.size()) == doctest::Approx(want_dot).epsilon(1e-14));

    double want_sum = 0.0, want_max = a[0];
    for (double x : a) {
        want_sum += x;
        if (x > want_max) want_max = x;
    }
    CHECK(k::ref::sum(a.data(), a.size()) == doctest::Approx(want_sum).epsilon(1e-14));
    CHECK(k::ref::max_value(a.data(), a.size()) == want_max);

    auto y = b;
    k::ref::axpy(y.data(), 0.5, a.data(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(b[i] + 0.5 * a[i]).epsilon(1e-15));

    auto s = a;
    k::ref::scale(s.data(), -2.0, s.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == -2.0 * a[i]);
}

TEST_CASE("matvec and transpose matvec agree with naive loops") {
    Rng rng(12);
    const std::size_t rows = 7, cols = 5;
    auto m = rand_vec(rng, rows * cols);
    auto x = rand_vec(rng, cols);
    auto xt = rand_vec(rng, rows);

    std::vector<double> y(rows), want(rows, 0.0);
    k::ref::matvec(y.data(), m.data(), rows, cols, x.data());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) want[i] += m[i * cols + j] * x[j];
    for (std::size_t i = 0; i < rows; ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-14));

    std::vector<double> yt(cols), want_t(cols, 0.0);
    k::ref::matvec_t(yt.data(), m.data(), rows, cols, xt.data());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) want_t[j] += m[i * cols + j] * xt[i];
    for (std::size_t j = 0; j < cols; ++j)
        CHECK(yt[j] == doctest::Approx(want_t[j]).epsilon(1e-14));
}

TEST_CASE("outer_acc accumulates alpha * u v^T") {
    Rng rng(13);
    const std::size_t m = 4, n = 6;
    auto acc = rand_vec(rng, m * n);
    auto base = acc;
    auto u = rand_vec(rng, m);
    auto v = rand_vec(rng, n);
    k::ref::outer_acc(acc.data(), 1.5, u.data(), m, v.data(), n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            CHECK(acc[i * n + j] ==
                  doctest::Approx(base[i * n + j] + 1.5 * u[i] * v[j]).epsilon(1e-14));
}

TEST_CASE("reference exp_inplace matches std::exp") {
    Rng rng(14);
    auto x = rand_vec(rng, 257, -30.0, 30.0);
    auto got = x;
    k::ref::exp_inplace(got.data(), got.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(got[i] == std::exp(x[i]));
}

TEST_CASE("avx2 variants agree with scalar reference" *
          doctest::skip(!k::avx2_available())) {
    Rng rng(15);
    // odd sizes on purpose: tails take the scalar cleanup path
    for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{4},
                          std::size_t{5}, std::size_t{7}, std::size_t{8}, std::size_t{15},
                          std::size_t{64}, std::size_t{67}, std::size_t{200}}) {
        auto a = rand_vec(rng, n);
        auto b = rand_vec(rng, n);
        double mag = 0.0;
        for (std::size_t i = 0; i < n; ++i) mag += std::fabs(a[i] * b[i]);

        check_close(k::avx2::dot(a.data(), b.data(), n), k::ref::dot(a.data(), b.data(), n), mag);
        check_close(k::avx2::sum(a.data(), n), k::ref::sum(a.data(), n), mag);
        CHECK(k::avx2::max_value(a.data(), n) == k::ref::max_value(a.data(), n));

        auto y1 = b, y2 = b;
        k::ref::axpy(y1.data(), 0.77, a.data(), n);
        k::avx2::axpy(y2.data(), 0.77, a.data(), n);
        // fused multiply-add rounds once, scalar twice: 1 ulp apart at most
        for (std::size_t i = 0; i < n; ++i) check_close(y2[i], y1[i], 2.0);

        auto s1 = a, s2 = a;
        k::ref::scale(s1.data(), 1.0 / 3.0, n);
        k::avx2::scale(s2.data(), 1.0 / 3.0, n);
        for (std::size_t i = 0; i < n; ++i) CHECK(s1[i] == s2[i]);
    }

    const std::size_t rows = 9, cols = 11;
    auto m = rand_vec(rng, rows * cols);
    auto x = rand_vec(rng, cols);
    auto xt = rand_vec(rng, rows);
    std::vector<double> y1(rows), y2(rows), z1(cols), z2(cols);
    k::ref::matvec(y1.data(), m.data(), rows, cols, x.data());
    k::avx2::matvec(y2.data(), m.data(), rows, cols, x.data());
    for (std::size_t i = 0; i < rows; ++i) check_close(y2[i], y1[i], cols);
    k::ref::matvec_t(z1.data(), m.data(), rows, cols, xt.data());
    k::avx2::matvec_t(z2.data(), m.data(), rows, cols, xt.data());
    for (std::size_t j = 0; j < cols; ++j) check_close(z2[j], z1[j], rows);

    auto acc1 = rand_vec(rng, rows * cols);
    auto acc2 = acc1;
    auto u = rand_vec(rng, rows);
    auto v = rand_vec(rng, cols);
    k::ref::outer_acc(acc1.data(), -0.3, u.data(), rows, v.data(), cols);
    k::avx2::outer_acc(acc2.data(), -0.3, u.data(), rows, v.data(), cols);
    for (std::size_t i = 0; i < rows * cols; ++i) check_close(acc2[i], acc1[i], 2.0);
}

TEST_CASE("avx2 exp matches std::exp to a few ulp" * doctest::skip(!k::avx2_available())) {
    Rng rng(16);
    std::vector<double> xs;
    for (int i = 0; i < 4096; ++i) xs.push_back(-745.0 + 1454.0 * rng.uniform());
    for (int i = 0; i < 512; ++i) xs.push_back(-0.01 + 0.02 * rng.uniform());
    // boundary and special cases, padded to a multiple of 4 so every value
    // goes through the vector path
    const double inf = std::numeric_limits<double>::infinity();
    for (double v : {0.0, -0.0, 1.0, -1.0, 709.0, 709.78, 710.0, 1000.0, -700.0, -745.0,
                     -745.2, -746.0, -1000.0, inf, -inf, 5e-324, -5e-324})
        xs.push_back(v);
    while (xs.size() % 4 != 0) xs.push_back(0.5);

    auto got = xs;
    k::avx2::exp_inplace(got.data(), got.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double want = std::exp(xs[i]);
        if (std::isinf(want)) {
            CHECK(std::isinf(got[i]));
        } else {
            // 4 ulp relative, plus an absolute floor for the subnormal tail
            CHECK(std::fabs(got[i] - want) <= 1e-15 * want + 2e-323);
        }
    }

    std::vector<double> nans(4, std::numeric_limits<double>::quiet_NaN());
    k::avx2::exp_inplace(nans.data(), nans.size());
    for (double v : nans) CHECK(std::isnan(v));
}

TEST_CASE("backend dispatch and override") {
    CHECK((k::active_backend() == k::Backend::scalar || k::active_backend() == k::Backend::avx2));
    const k::Backend before = k::active_backend();

    k::force_backend(k::Backend::scalar);
    CHECK(k::active_backend() == k::Backend::scalar);
    CHECK(std::string(k::backend_name(k::active_backend())) == "scalar");

    std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(k::dot(a.data(), a.data(), a.size()) == 55.0);

    if (k::avx2_available()) {
        k::force_backend(k::Backend::avx2);
        CHECK(std::string(k::backend_name(k::active_backend())) == "avx2");
        CHECK(k::dot(a.data(), a.data(), a.size()) == 55.0);
    } else {
        CHECK_THROWS(k::force_backend(k::Backend::avx2));
    }
    k::force_backend(before);
}
