#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "iclab/errors.hpp"
#include "iclab/taskgen.hpp"

using namespace iclab;

TEST_CASE("sphere samples are unit norm and symmetric") {
    Rng rng(101);
    for (int i = 0; i < 100; ++i) {
        auto v = sample_unit_sphere(rng, 5);
        CHECK(std::fabs(norm2(v) - 1.0) < 1e-12);
    }
    // d=1 collapses to a sign
    for (int i = 0; i < 20; ++i) {
        auto v = sample_unit_sphere(rng, 1);
        CHECK((v[0] == 1.0 || v[0] == -1.0));
    }
    // coordinate means vanish by symmetry
    double mean[3] = {0.0, 0.0, 0.0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto v = sample_unit_sphere(rng, 3);
        for (int j = 0; j < 3; ++j) mean[j] += v[j];
    }
    for (int j = 0; j < 3; ++j) CHECK(std::fabs(mean[j] / n) < 0.02);
}

TEST_CASE("assign_class picks the nearest vector, ties to lowest index") {
    Matrix z(2, 2);
    z(0, 0) = 1.0;
    z(1, 1) = 1.0;
    const double a[2] = {0.6, 0.8};
    CHECK(assign_class(a, z) == 1);
    const double b[2] = {0.8, 0.6};
    CHECK(assign_class(b, z) == 0);
    const double eq[2] = {std::sqrt(0.5), std::sqrt(0.5)};
    CHECK(assign_class(eq, z) == 0);

    Rng rng(102);
    TaskConfig cfg{.d = 4, .C = 3, .n = 3};
    auto zs = sample_class_vectors(cfg, rng);
    for (std::size_t c = 0; c < 3; ++c) CHECK(assign_class(zs.row(c), zs) == c);
}

TEST_CASE("two classes on the circle split it in half") {
    Rng rng(103);
    TaskConfig cfg{.d = 2, .C = 2, .n = 2};
    auto z = sample_class_vectors(cfg, rng);
    int hits = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        if (assign_class(sample_unit_sphere(rng, 2).data(), z) == 0) ++hits;
    CHECK(std::fabs(static_cast<double>(hits) / n - 0.5) < 0.02);
}

TEST_CASE("config validation rejects bad shapes") {
    CHECK_THROWS_AS((TaskConfig{.d = 1, .C = 2, .n = 2}.validate()), ValidationError);
    CHECK_THROWS_AS((TaskConfig{.d = 2, .C = 1, .n = 2}.validate()), ValidationError);
    CHECK_THROWS_AS((TaskConfig{.d = 2, .C = 3, .n = 10}.validate()), ValidationError);
    CHECK_THROWS_AS((TaskConfig{.d = 2, .C = 3, .n = 2}.validate()), ValidationError);
    CHECK_NOTHROW((TaskConfig{.d = 2, .C = 5, .n = 100}.validate()));
}

TEST_CASE("contexts satisfy their invariants") {
    TaskConfig cfg{.d = 3, .C = 5, .n = 10};
    Rng rng(104);
    auto row_norm = [](const Matrix& m, std::size_t r) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m(r, j) * m(r, j);
        return std::sqrt(s);
    };
    for (int trial = 0; trial < 10000; ++trial) {
        auto ctx = generate_context(cfg, rng);
        std::vector<std::size_t> counts(cfg.C, 0);
        for (std::size_t i = 0; i < cfg.n; ++i) {
            CHECK(std::fabs(row_norm(ctx.xs, i) - 1.0) < 1e-12);
            CHECK(ctx.labels[i] == assign_class(ctx.xs.row(i), ctx.class_vectors));
            ++counts[ctx.labels[i]];
        }
        for (auto c : counts) CHECK(c == cfg.n / cfg.C);
        for (std::size_t c = 0; c < cfg.C; ++c)
            CHECK(std::fabs(row_norm(ctx.class_vectors, c) - 1.0) < 1e-12);
        CHECK(std::fabs(norm2(ctx.x_query) - 1.0) < 1e-12);
        CHECK(ctx.y_query == assign_class(ctx.x_query.data(), ctx.class_vectors));
    }
}

TEST_CASE("query class is uniform over classes") {
    TaskConfig cfg{.d = 2, .C = 5, .n = 100};
    auto ds = generate_dataset(cfg, 105, 512);
    std::vector<int> counts(cfg.C, 0);
    for (const auto& ctx : ds.contexts) ++counts[ctx.y_query];
    // binomial 3-sigma around 512/5
    const double mean = 512.0 / 5.0;
    const double sigma = std::sqrt(512.0 * 0.2 * 0.8);
    for (int c : counts) CHECK(std::fabs(c - mean) < 3.0 * sigma);
}

TEST_CASE("datasets replay bit-identically and per-context seeds are stable") {
    TaskConfig cfg{.d = 3, .C = 5, .n = 20};
    auto a = generate_dataset(cfg, 99, 8);
    auto b = generate_dataset(cfg, 99, 8);
    REQUIRE(a.contexts.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(a.contexts[i].xs == b.contexts[i].xs);
        CHECK(a.contexts[i].class_vectors == b.contexts[i].class_vectors);
        CHECK(a.contexts[i].labels == b.contexts[i].labels);
        CHECK(a.contexts[i].x_query == b.contexts[i].x_query);
        CHECK(a.contexts[i].y_query == b.contexts[i].y_query);
    }
    // each context depends only on (seed, index), not on the rest of the run
    Rng solo(derive_seed(99, 3));
    auto ctx = generate_context(cfg, solo);
    CHECK(ctx.xs == a.contexts[3].xs);
    CHECK(ctx.y_query == a.contexts[3].y_query);

    auto c = generate_dataset(cfg, 100, 8);
    CHECK(c.contexts[0].xs != a.contexts[0].xs);
}

TEST_CASE("starving a class region trips the rejection cap") {
    TaskConfig cfg{.d = 2, .C = 5, .n = 5, .max_reject = 1};
    bool tripped = false;
    for (std::uint64_t seed = 0; seed < 50 && !tripped; ++seed) {
        Rng rng(seed);
        try {
            (void)generate_context(cfg, rng);
        } catch (const NumericError& e) {
            tripped = true;
            CHECK(std::string(e.what()).find("rejection cap") != std::string::npos);
        }
    }
    CHECK(tripped);
}

TEST_CASE("dense and sparse placement on a synthetic cluster") {
    // all points piled near (1, 0): vertex 0 must win dense placement
    Matrix xs(40, 2);
    Rng rng(107);
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        const double a = 0.05 * (rng.uniform() - 0.5);
        xs(i, 0) = std::cos(a);
        xs(i, 1) = std::sin(a);
    }
    auto [dense_q, sparse_q] = dense_sparse_queries(xs, {});
    CHECK(dense_q[0] == doctest::Approx(1.0));
    CHECK(dense_q[1] == doctest::Approx(0.0));
    // sparse vertex sees no neighbors at all
    int near = 0;
    for (std::size_t i = 0; i < xs.rows(); ++i)
        if (xs(i, 0) * sparse_q[0] + xs(i, 1) * sparse_q[1] > 0.3) ++near;
    CHECK(near == 0);
}

TEST_CASE("dense/sparse datasets share contexts and differ in query only") {
    TaskConfig cfg{.d = 2, .C = 5, .n = 100};
    auto [dense, sparse] = generate_dense_sparse_pair(cfg, 108, 400);
    REQUIRE(dense.contexts.size() == sparse.contexts.size());
    REQUIRE(dense.contexts.size() > 0);
    // the filter keeps well under half of the candidates
    CHECK(dense.contexts.size() < 400);

    DenseSparseOptions opt;
    for (std::size_t i = 0; i < dense.contexts.size(); ++i) {
        const auto& dc = dense.contexts[i];
        const auto& sc = sparse.contexts[i];
        CHECK(dc.xs == sc.xs);
        CHECK(dc.labels == sc.labels);
        CHECK(dc.class_vectors == sc.class_vectors);

        int dn = 0, sn = 0;
        for (std::size_t r = 0; r < dc.xs.rows(); ++r) {
            if (dc.xs(r, 0) * dc.x_query[0] + dc.xs(r, 1) * dc.x_query[1] > opt.near_threshold)
                ++dn;
            if (sc.xs(r, 0) * sc.x_query[0] + sc.xs(r, 1) * sc.x_query[1] > opt.near_threshold)
                ++sn;
        }
        CHECK(dn >= sn);
        CHECK(dc.y_query == assign_class(dc.x_query.data(), dc.class_vectors));
        CHECK(sc.y_query == assign_class(sc.x_query.data(), sc.class_vectors));

        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t r = 0; r < dc.xs.rows(); ++r) {
            mean0 += dc.xs(r, 0);
            mean1 += dc.xs(r, 1);
        }
        mean0 /= static_cast<double>(cfg.n);
        mean1 /= static_cast<double>(cfg.n);
        CHECK(std::sqrt(mean0 * mean0 + mean1 * mean1) >= opt.mean_threshold);
    }

    TaskConfig bad = cfg;
    bad.d = 3;
    CHECK_THROWS_AS(generate_dense_sparse_pair(bad, 1, 4), ValidationError);
    // impossible filter -> explicit failure, not an empty dataset
    DenseSparseOptions strict;
    strict.mean_threshold = 1.1;
    CHECK_THROWS_AS(generate_dense_sparse_pair(cfg, 1, 4, strict), NumericError);
}

TEST_CASE("transience batches cycle through the fixed class sets") {
    TransienceConfig tc{.base = {.d = 3, .C = 5, .n = 10}, .m = 16};
    Rng rng(109);
    auto sets = draw_class_sets(tc.base, tc.m, rng);
    REQUIRE(sets.size() == 16);

    auto batch = generate_transience_batch(tc, sets, rng, 32);
    REQUIRE(batch.size() == 32);
    for (std::size_t i = 0; i < 32; ++i) {
        CHECK(batch[i].class_vectors == sets[i / 2]);
        CHECK(batch[i].y_query == assign_class(batch[i].x_query.data(), sets[i / 2]));
    }

    CHECK_THROWS_AS(generate_transience_batch(tc, sets, rng, 33), ValidationError);
    TransienceConfig one{.base = tc.base, .m = 1};
    auto single = draw_class_sets(one.base, 1, rng);
    auto sb = generate_transience_batch(one, single, rng, 4);
    for (const auto& ctx : sb) CHECK(ctx.class_vectors == single[0]);
}
