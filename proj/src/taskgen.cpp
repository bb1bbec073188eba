#include "iclab/taskgen.hpp"

#include <cmath>
#include <string>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"

namespace iclab {

void TaskConfig::validate() const {
    if (d < 2) throw ValidationError("task: d must be >= 2");
    if (C < 2) throw ValidationError("task: C must be >= 2");
    if (n < C) throw ValidationError("task: n must be >= C");
    if (n % C != 0) throw ValidationError("task: n must be divisible by C");
    if (max_reject == 0) throw ValidationError("task: max_reject must be positive");
}

void TransienceConfig::validate() const {
    base.validate();
    if (m < 1) throw ValidationError("transience: m must be >= 1");
}

std::vector<double> sample_unit_sphere(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (;;) {
        rng.fill_gaussian(v.data(), d);
        const double norm = norm2(v);
        if (norm > 0.0) {
            if (d == 1) {
                // one dimension collapses to the sign; keep it exact
                v[0] = v[0] > 0.0 ? 1.0 : -1.0;
            } else {
                kernels::scale(v.data(), 1.0 / norm, d);
            }
            return v;
        }
    }
}

std::size_t assign_class(const double* x, const Matrix& class_vectors) {
    std::size_t best = 0;
    double best_dot = kernels::dot(x, class_vectors.row(0), class_vectors.cols());
    for (std::size_t c = 1; c < class_vectors.rows(); ++c) {
        const double dc = kernels::dot(x, class_vectors.row(c), class_vectors.cols());
        if (dc > best_dot) {
            best_dot = dc;
            best = c;
        }
    }
    return best;
}

Matrix sample_class_vectors(const TaskConfig& cfg, Rng& rng) {
    Matrix z(cfg.C, cfg.d);
    for (std::size_t c = 0; c < cfg.C; ++c) {
        auto v = sample_unit_sphere(rng, cfg.d);
        for (std::size_t j = 0; j < cfg.d; ++j) z(c, j) = v[j];
    }
    return z;
}

namespace {

std::vector<double> reject_sample_class(const TaskConfig& cfg, const Matrix& class_vectors,
                                        std::size_t want, Rng& rng) {
    for (std::size_t attempt = 0; attempt < cfg.max_reject; ++attempt) {
        auto v = sample_unit_sphere(rng, cfg.d);
        if (assign_class(v.data(), class_vectors) == want) return v;
    }
    throw NumericError("rejection cap exceeded for class " + std::to_string(want));
}

}  // namespace

Context generate_context_for_classes(const TaskConfig& cfg, const Matrix& class_vectors,
                                     Rng& rng) {
    cfg.validate();
    if (class_vectors.rows() != cfg.C || class_vectors.cols() != cfg.d)
        throw ValidationError("task: class vector shape mismatch");

    Context ctx;
    ctx.class_vectors = class_vectors;
    ctx.xs = Matrix(cfg.n, cfg.d);
    ctx.labels.resize(cfg.n);

    const std::size_t per_class = cfg.n / cfg.C;
    for (std::size_t c = 0; c < cfg.C; ++c) {
        for (std::size_t j = 0; j < per_class; ++j) {
            auto v = reject_sample_class(cfg, class_vectors, c, rng);
            const std::size_t row = c * per_class + j;
            for (std::size_t k = 0; k < cfg.d; ++k) ctx.xs(row, k) = v[k];
            ctx.labels[row] = c;
        }
    }

    ctx.y_query = rng.below(cfg.C);
    ctx.x_query = reject_sample_class(cfg, class_vectors, ctx.y_query, rng);
    return ctx;
}

Context generate_context(const TaskConfig& cfg, Rng& rng) {
    cfg.validate();
    return generate_context_for_classes(cfg, sample_class_vectors(cfg, rng), rng);
}

Dataset generate_dataset(const TaskConfig& cfg, std::uint64_t seed, std::size_t count) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.seed = seed;
    ds.contexts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        ds.contexts.push_back(generate_context(cfg, rng));
    }
    return ds;
}

std::pair<std::vector<double>, std::vector<double>> dense_sparse_queries(
    const Matrix& xs, const DenseSparseOptions& opt) {
    if (xs.cols() != 2) throw ValidationError("dense/sparse placement needs d == 2");
    const double two_pi = 6.283185307179586476925286766559;
    std::size_t best_dense = 0, best_sparse = 0;
    std::size_t dense_count = 0, sparse_count = xs.rows() + 1;
    for (std::size_t k = 0; k < opt.K; ++k) {
        const double angle = two_pi * static_cast<double>(k) / static_cast<double>(opt.K);
        const double v[2] = {std::cos(angle), std::sin(angle)};
        std::size_t near = 0;
        for (std::size_t i = 0; i < xs.rows(); ++i)
            if (kernels::dot(xs.row(i), v, 2) > opt.near_threshold) ++near;
        if (near > dense_count) {
            dense_count = near;
            best_dense = k;
        }
        if (near < sparse_count) {
            sparse_count = near;
            best_sparse = k;
        }
    }
    auto vertex = [&](std::size_t k) {
        const double angle = two_pi * static_cast<double>(k) / static_cast<double>(opt.K);
        return std::vector<double>{std::cos(angle), std::sin(angle)};
    };
    return {vertex(best_dense), vertex(best_sparse)};
}

std::pair<Dataset, Dataset> generate_dense_sparse_pair(const TaskConfig& cfg,
                                                       std::uint64_t seed, std::size_t count,
                                                       const DenseSparseOptions& opt) {
    cfg.validate();
    if (cfg.d != 2) throw ValidationError("dense/sparse generation needs d == 2");
    if (opt.K < 1) throw ValidationError("dense/sparse: K must be positive");

    Dataset dense, sparse;
    dense.config = sparse.config = cfg;
    dense.seed = sparse.seed = seed;

    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        Context ctx = generate_context(cfg, rng);

        double mean[2] = {0.0, 0.0};
        for (std::size_t r = 0; r < ctx.xs.rows(); ++r) {
            mean[0] += ctx.xs(r, 0);
            mean[1] += ctx.xs(r, 1);
        }
        mean[0] /= static_cast<double>(cfg.n);
        mean[1] /= static_cast<double>(cfg.n);
        if (std::sqrt(mean[0] * mean[0] + mean[1] * mean[1]) < opt.mean_threshold) continue;

        auto [dense_q, sparse_q] = dense_sparse_queries(ctx.xs, opt);

        Context dctx = ctx;
        dctx.x_query = dense_q;
        dctx.y_query = assign_class(dense_q.data(), ctx.class_vectors);
        dense.contexts.push_back(std::move(dctx));

        Context sctx = std::move(ctx);
        sctx.x_query = sparse_q;
        sctx.y_query = assign_class(sparse_q.data(), sctx.class_vectors);
        sparse.contexts.push_back(std::move(sctx));
    }

    if (dense.contexts.empty()) throw NumericError("no dense/sparse contexts");
    return {std::move(dense), std::move(sparse)};
}

std::vector<Matrix> draw_class_sets(const TaskConfig& cfg, std::size_t m, Rng& rng) {
    std::vector<Matrix> sets;
    sets.reserve(m);
    for (std::size_t i = 0; i < m; ++i) sets.push_back(sample_class_vectors(cfg, rng));
    return sets;
}

std::vector<Context> generate_transience_batch(const TransienceConfig& cfg,
                                               const std::vector<Matrix>& fixed_sets,
                                               Rng& rng, std::size_t batch) {
    cfg.validate();
    if (fixed_sets.size() != cfg.m) throw ValidationError("transience: expected m fixed sets");
    if (batch == 0 || batch % cfg.m != 0)
        throw ValidationError("transience: batch must be a positive multiple of m");

    std::vector<Context> out;
    out.reserve(batch);
    const std::size_t per_set = batch / cfg.m;
    for (std::size_t s = 0; s < cfg.m; ++s)
        for (std::size_t j = 0; j < per_set; ++j)
            out.push_back(generate_context_for_classes(cfg.base, fixed_sets[s], rng));
    return out;
}

}  // namespace iclab
