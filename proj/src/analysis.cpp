#include "iclab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <utility>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"
#include "iclab/numerics.hpp"
#include "iclab/training.hpp"

namespace iclab {

namespace {

void check_contexts(const std::vector<Context>& contexts, const char* who) {
    if (contexts.empty()) throw ValidationError(std::string(who) + ": no contexts");
}

// x_i . x_query for every exemplar, the one quantity every closed-form
// predictor and every grid point shares
std::vector<double> query_dots(const Context& ctx) {
    const std::size_t n = ctx.xs.rows();
    std::vector<double> dots(n);
    for (std::size_t i = 0; i < n; ++i)
        dots[i] = kernels::dot(ctx.xs.row(i), ctx.x_query.data(), ctx.xs.cols());
    return dots;
}

double mean_of(const std::vector<double>& v) {
    return kernels::sum(v.data(), v.size()) / static_cast<double>(v.size());
}

}  // namespace

Matrix sensitivity_all(const Predictor& p, const Context& ctx, double h) {
    if (!p) throw ValidationError("sensitivity: missing predictor");
    if (!(h > 0.0)) throw ValidationError("sensitivity: step must be positive");
    const std::size_t d = ctx.x_query.size();
    const std::size_t C = ctx.class_vectors.rows();
    Matrix s(C, d);
    Context probe = ctx;
    for (std::size_t k = 0; k < d; ++k) {
        const double saved = ctx.x_query[k];
        probe.x_query[k] = saved + h;
        const std::vector<double> up = p(probe);
        probe.x_query[k] = saved - h;
        const std::vector<double> down = p(probe);
        probe.x_query[k] = saved;
        if (up.size() != C || down.size() != C)
            throw ValidationError("sensitivity: predictor returned wrong class count");
        for (std::size_t j = 0; j < C; ++j) s(j, k) = (up[j] - down[j]) / (2.0 * h);
    }
    return s;
}

std::vector<double> sensitivity(const Predictor& p, const Context& ctx, std::size_t j,
                                double h) {
    const Matrix s = sensitivity_all(p, ctx, h);
    if (j >= s.rows()) throw ValidationError("sensitivity: class index out of range");
    return std::vector<double>(s.row(j), s.row(j) + s.cols());
}

AlignmentReport alignment(const Predictor& a, const Predictor& b,
                          const std::vector<Context>& contexts, double h) {
    check_contexts(contexts, "alignment");
    AlignmentReport rep;
    for (const Context& ctx : contexts) {
        std::vector<double> pa, pb;
        Matrix sa, sb;
        try {
            pa = a(ctx);
            pb = b(ctx);
            sa = sensitivity_all(a, ctx, h);
            sb = sensitivity_all(b, ctx, h);
        } catch (const NumericError&) {
            ++rep.n_excluded;  // saturated forward pass
            continue;
        }
        if (!all_finite(pa) || !all_finite(pb) || !all_finite(sa) || !all_finite(sb)) {
            ++rep.n_excluded;
            continue;
        }

        const std::size_t C = sa.rows();
        const std::size_t d = sa.cols();
        double diff = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double dd = pa[j] - pb[j];
            diff += dd * dd;
        }
        rep.preds_diff += std::sqrt(diff);

        double cos_acc = 0.0;
        double norm_acc = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double* ra = sa.row(j);
            const double* rb = sb.row(j);
            double dsq = 0.0;
            bool identical = true;
            for (std::size_t k = 0; k < d; ++k) {
                const double dd = ra[k] - rb[k];
                dsq += dd * dd;
                if (ra[k] != rb[k]) identical = false;
            }
            norm_acc += std::sqrt(dsq);
            if (identical) {
                cos_acc += 1.0;  // covers the shared-zero case as agreement
                continue;
            }
            const double na = kernels::dot(ra, ra, d);
            const double nb = kernels::dot(rb, rb, d);
            if (na == 0.0 || nb == 0.0) continue;  // one vanished: no direction to compare
            const double c = kernels::dot(ra, rb, d) / std::sqrt(na * nb);
            cos_acc += std::clamp(c, -1.0, 1.0);
        }
        rep.cos_sim += cos_acc / static_cast<double>(C);
        rep.model_diff += norm_acc / static_cast<double>(C);
        ++rep.n_contexts;
    }
    if (rep.n_contexts == 0)
        throw NumericError("alignment: every context was excluded as unstable");
    const double inv = 1.0 / static_cast<double>(rep.n_contexts);
    rep.preds_diff *= inv;
    rep.cos_sim *= inv;
    rep.model_diff *= inv;
    return rep;
}

std::vector<PerContextMetrics> per_context(const Predictor& p,
                                           const std::vector<Context>& contexts) {
    if (!p) throw ValidationError("per_context: missing predictor");
    std::vector<PerContextMetrics> rows;
    rows.reserve(contexts.size());
    for (const Context& ctx : contexts) {
        const std::vector<double> probs = p(ctx);
        PerContextMetrics m;
        m.loss = ce_loss(probs, ctx.y_query);
        m.p_correct = probs[ctx.y_query];
        for (double q : probs)
            if (q > 0.0) m.entropy -= q * std::log(q);
        rows.push_back(m);
    }
    return rows;
}

PredictorStats evaluate_predictor(const Predictor& p, const std::vector<Context>& contexts) {
    check_contexts(contexts, "evaluate_predictor");
    PredictorStats s;
    std::size_t correct = 0;
    for (const Context& ctx : contexts) {
        const std::vector<double> probs = p(ctx);
        s.loss += ce_loss(probs, ctx.y_query);
        if (argmax(probs) == ctx.y_query) ++correct;
    }
    s.loss /= static_cast<double>(contexts.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(contexts.size());
    return s;
}

void GridAxis::validate() const {
    if (!(min < max)) throw ValidationError("grid axis: min must be below max");
    if (count < 2) throw ValidationError("grid axis: need at least two points");
    if (!std::isfinite(min) || !std::isfinite(max))
        throw ValidationError("grid axis: bounds must be finite");
    if (log_scale && !(min > 0.0))
        throw ValidationError("grid axis: log scale needs positive bounds");
}

std::vector<double> GridAxis::points() const {
    validate();
    std::vector<double> pts(count);
    if (log_scale) {
        const double lo = std::log10(min);
        const double step = (std::log10(max) - lo) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i)
            pts[i] = std::pow(10.0, lo + step * static_cast<double>(i));
    } else {
        const double step = (max - min) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i) pts[i] = min + step * static_cast<double>(i);
    }
    pts.front() = min;
    pts.back() = max;
    return pts;
}

namespace {

// per-context cache for the grid searches: the query dots plus the label
// layout, enough to rebuild logits at any grid point in O(n + C)
struct CachedContext {
    std::vector<double> dots;
    const std::vector<std::size_t>* labels;
    std::size_t y;
    std::size_t C;
};

std::vector<CachedContext> cache_contexts(const std::vector<Context>& contexts) {
    std::vector<CachedContext> cache;
    cache.reserve(contexts.size());
    for (const Context& ctx : contexts)
        cache.push_back({query_dots(ctx), &ctx.labels, ctx.y_query,
                         static_cast<std::size_t>(ctx.class_vectors.rows())});
    return cache;
}

double logits_ce(const std::vector<double>& logits, std::size_t y) {
    return cross_entropy_from_logits(logits, y);
}

// mean one-step-GD loss at one learning rate, from per-class dot sums
double gd_loss_at(const std::vector<CachedContext>& cache,
                  const std::vector<std::vector<double>>& class_sums, double eta) {
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t c = 0; c < cache.size(); ++c) {
        const double scale = eta / static_cast<double>(cache[c].dots.size());
        logits.assign(cache[c].C, 0.0);
        for (std::size_t k = 0; k < cache[c].C; ++k) logits[k] = scale * class_sums[c][k];
        total += logits_ce(logits, cache[c].y);
    }
    return total / static_cast<double>(cache.size());
}

std::vector<std::vector<double>> class_dot_sums(const std::vector<CachedContext>& cache) {
    std::vector<std::vector<double>> sums(cache.size());
    for (std::size_t c = 0; c < cache.size(); ++c) {
        sums[c].assign(cache[c].C, 0.0);
        for (std::size_t i = 0; i < cache[c].dots.size(); ++i)
            sums[c][(*cache[c].labels)[i]] += cache[c].dots[i];
    }
    return sums;
}

// per-class sums of e^{(dot - 1)/sigma2}, the unit-sphere form of the rbf
void rbf_class_sums(const std::vector<CachedContext>& cache, double sigma2,
                    std::vector<std::vector<double>>& sums, std::vector<double>& ker) {
    for (std::size_t c = 0; c < cache.size(); ++c) {
        const auto& dots = cache[c].dots;
        ker.resize(dots.size());
        for (std::size_t i = 0; i < dots.size(); ++i) ker[i] = (dots[i] - 1.0) / sigma2;
        kernels::exp_inplace(ker.data(), ker.size());
        sums[c].assign(cache[c].C, 0.0);
        for (std::size_t i = 0; i < ker.size(); ++i)
            sums[c][(*cache[c].labels)[i]] += ker[i];
    }
}

}  // namespace

GdFit fit_gd_step(const std::vector<Context>& contexts, const GridAxis& eta) {
    check_contexts(contexts, "fit_gd_step");
    const std::vector<double> etas = eta.points();
    const auto cache = cache_contexts(contexts);
    const auto sums = class_dot_sums(cache);

    GdFit fit;
    fit.loss = std::numeric_limits<double>::infinity();
    fit.surface.reserve(etas.size());
    for (double e : etas) {
        const double loss = gd_loss_at(cache, sums, e);
        fit.surface.push_back({e, loss});
        if (loss < fit.loss) {
            fit.loss = loss;
            fit.eta = e;
        }
    }
    return fit;
}

KernelFit fit_kernel_gd(const std::vector<Context>& contexts, const GridAxis& eta,
                        const GridAxis& sigma2) {
    check_contexts(contexts, "fit_kernel_gd");
    const std::vector<double> etas = eta.points();
    const std::vector<double> sigmas = sigma2.points();
    const auto cache = cache_contexts(contexts);

    KernelFit fit;
    fit.loss = std::numeric_limits<double>::infinity();
    fit.surface.reserve(etas.size() * sigmas.size());
    std::vector<double> ker;
    std::vector<std::vector<double>> sums(cache.size());
    // width in the outer loop so each kernel evaluation serves every eta
    for (double s2 : sigmas) {
        rbf_class_sums(cache, s2, sums, ker);
        for (double e : etas) {
            const double loss = gd_loss_at(cache, sums, e);
            fit.surface.push_back({e, s2, loss});
            const bool better =
                loss < fit.loss ||
                (loss == fit.loss && (e < fit.eta || (e == fit.eta && s2 < fit.sigma2)));
            if (better) {
                fit.loss = loss;
                fit.eta = e;
                fit.sigma2 = s2;
            }
        }
    }
    return fit;
}

namespace {

// attention terms for one context at one score scale; z includes the query's
// own (unshifted score = c_sigma/sqrt(dim)) term when include_self is set
struct AdaptiveTerms {
    std::vector<double> class_sums;  // sum of e^{t_i - shift} per class
    double z = 0.0;
};

AdaptiveTerms adaptive_terms(const CachedContext& ctx, std::size_t dim, double c_sigma,
                             bool include_self, std::vector<double>& scratch) {
    const double scale = c_sigma / std::sqrt(static_cast<double>(dim));
    const auto& dots = ctx.dots;
    scratch.resize(dots.size());
    double shift = include_self ? scale : -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dots.size(); ++i) {
        scratch[i] = scale * dots[i];
        shift = std::max(shift, scratch[i]);
    }
    for (double& t : scratch) t -= shift;
    kernels::exp_inplace(scratch.data(), scratch.size());
    AdaptiveTerms terms;
    terms.class_sums.assign(ctx.C, 0.0);
    for (std::size_t i = 0; i < scratch.size(); ++i)
        terms.class_sums[(*ctx.labels)[i]] += scratch[i];
    terms.z = kernels::sum(scratch.data(), scratch.size());
    if (include_self) terms.z += std::exp(scale - shift);
    return terms;
}

double adaptive_loss_at(const std::vector<CachedContext>& cache,
                        const std::vector<AdaptiveTerms>& terms, double c_eta) {
    double total = 0.0;
    std::vector<double> logits;
    for (std::size_t c = 0; c < cache.size(); ++c) {
        logits.assign(cache[c].C, 0.0);
        const double f = c_eta / terms[c].z;
        for (std::size_t k = 0; k < cache[c].C; ++k) logits[k] = f * terms[c].class_sums[k];
        total += logits_ce(logits, cache[c].y);
    }
    return total / static_cast<double>(cache.size());
}

}  // namespace

AdaptiveFit fit_adaptive(const std::vector<Context>& contexts, const GridAxis& c_sigma,
                         const GridAxis& c_eta, bool include_self) {
    check_contexts(contexts, "fit_adaptive");
    const std::vector<double> cs = c_sigma.points();
    const std::vector<double> ce = c_eta.points();
    const auto cache = cache_contexts(contexts);
    const std::size_t dim = contexts.front().xs.cols() + cache.front().C;

    AdaptiveFit fit;
    fit.loss = std::numeric_limits<double>::infinity();
    fit.surface.reserve(cs.size() * ce.size());
    std::vector<AdaptiveTerms> terms(cache.size());
    std::vector<double> scratch;
    for (double s : cs) {
        for (std::size_t c = 0; c < cache.size(); ++c)
            terms[c] = adaptive_terms(cache[c], dim, s, include_self, scratch);
        for (double e : ce) {
            const double loss = adaptive_loss_at(cache, terms, e);
            fit.surface.push_back({s, e, loss});
            const bool better =
                loss < fit.loss ||
                (loss == fit.loss &&
                 (s < fit.c_sigma || (s == fit.c_sigma && e < fit.c_eta)));
            if (better) {
                fit.loss = loss;
                fit.c_sigma = s;
                fit.c_eta = e;
            }
        }
    }
    return fit;
}

ExtractedConstants extract_constants(const AttentionWeights& w, std::size_t d,
                                     std::size_t C) {
    const std::size_t dim = d + C;
    w.validate(dim);
    if (d == 0 || C == 0) throw ValidationError("extract_constants: empty block");

    const Matrix P = matmul(transpose(w.W_Q), w.W_K);
    const Matrix V = matmul(transpose(w.W_V), transpose(w.W_O));

    ExtractedConstants out;
    double diag = 0.0;
    for (std::size_t i = 0; i < d; ++i) diag += P(i, i);
    out.c_sigma_eff = diag / static_cast<double>(d);

    // y-block of the value path; the softmax upstream makes each column
    // shift-invariant, so pin the off-diagonal mean of every column at zero
    double eta_diag = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        double off = 0.0;
        for (std::size_t r = 0; r < C; ++r)
            if (r != c) off += V(d + r, d + c);
        const double shift = C > 1 ? off / static_cast<double>(C - 1) : 0.0;
        eta_diag += V(d + c, d + c) - shift;
    }
    out.c_eta_eff = eta_diag / static_cast<double>(C);

    double sq = 0.0;
    for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) {
            if (r < d && c < d) continue;  // x-block of P stays
            sq += P(r, c) * P(r, c);
        }
    for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) {
            if (r >= d && c >= d) continue;  // y-block of V stays
            sq += V(r, c) * V(r, c);
        }
    out.residual = std::sqrt(sq);
    return out;
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::selection: return "selection";
        case Strategy::elimination: return "elimination";
        default: return "indeterminate";
    }
}

Strategy classify_strategy(const AttentionWeights& w, std::size_t d, std::size_t C) {
    const ExtractedConstants c = extract_constants(w, d, C);
    if (c.c_sigma_eff > 0.0 && c.c_eta_eff > 0.0) return Strategy::selection;
    if (c.c_sigma_eff < 0.0 && c.c_eta_eff < 0.0) return Strategy::elimination;
    return Strategy::indeterminate;
}

std::vector<VariabilityRow> adaptive_variability(const std::vector<Context>& contexts,
                                                 const std::vector<double>& sigma2_grid) {
    check_contexts(contexts, "adaptive_variability");
    if (sigma2_grid.empty()) throw ValidationError("adaptive_variability: empty grid");
    const std::size_t d = contexts.front().xs.cols();
    const std::size_t n = contexts.front().xs.rows();
    for (const Context& ctx : contexts)
        if (ctx.xs.cols() != d || ctx.xs.rows() != n)
            throw ValidationError("adaptive_variability: contexts must share (d, n)");

    std::vector<std::vector<double>> dots;
    dots.reserve(contexts.size());
    for (const Context& ctx : contexts) dots.push_back(query_dots(ctx));

    std::vector<VariabilityRow> rows;
    rows.reserve(sigma2_grid.size());
    std::vector<double> S(contexts.size()), terms;
    for (double s2 : sigma2_grid) {
        if (!(s2 > 0.0)) throw ValidationError("adaptive_variability: sigma2 must be > 0");
        for (std::size_t c = 0; c < dots.size(); ++c) {
            terms.resize(n);
            for (std::size_t i = 0; i < n; ++i) terms[i] = (dots[c][i] - 1.0) / s2;
            kernels::exp_inplace(terms.data(), terms.size());
            S[c] = kernels::sum(terms.data(), terms.size());
        }
        const double mean = mean_of(S);
        double var = 0.0;
        for (double v : S) var += (v - mean) * (v - mean);
        var /= static_cast<double>(S.size());
        rows.push_back({s2, std::sqrt(var) / mean});
    }
    return rows;
}

namespace {

// 1-D learning-rate scan for the rbf kernel at one fixed width
std::pair<double, double> kernel_eta_fit(const std::vector<Context>& contexts, double sigma2,
                                         const std::vector<double>& etas) {
    const auto cache = cache_contexts(contexts);
    std::vector<std::vector<double>> sums(cache.size());
    std::vector<double> ker;
    rbf_class_sums(cache, sigma2, sums, ker);
    double best_eta = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (double e : etas) {
        const double loss = gd_loss_at(cache, sums, e);
        if (loss < best) {
            best = loss;
            best_eta = e;
        }
    }
    return {best_eta, best};
}

}  // namespace

DenseSparseFit dense_sparse_eta_fit(const std::vector<Context>& dense,
                                    const std::vector<Context>& sparse, double sigma2,
                                    const GridAxis& eta_grid, const GridAxis& c_eta_grid) {
    check_contexts(dense, "dense_sparse_eta_fit");
    check_contexts(sparse, "dense_sparse_eta_fit");
    if (!(sigma2 > 0.0)) throw ValidationError("dense_sparse_eta_fit: sigma2 must be > 0");

    std::vector<Context> joint = dense;
    joint.insert(joint.end(), sparse.begin(), sparse.end());
    const std::vector<double> etas = eta_grid.points();

    DenseSparseFit out;
    std::tie(out.eta_dense, out.loss_dense) = kernel_eta_fit(dense, sigma2, etas);
    std::tie(out.eta_sparse, out.loss_sparse) = kernel_eta_fit(sparse, sigma2, etas);
    out.eta_joint = kernel_eta_fit(joint, sigma2, etas).first;

    // adaptive coefficient on the union at the score scale matching sigma2
    const std::size_t d = dense.front().xs.cols();
    const std::size_t C = dense.front().class_vectors.rows();
    const double c_sigma = std::sqrt(static_cast<double>(d + C)) / sigma2;
    const auto cache = cache_contexts(joint);
    std::vector<AdaptiveTerms> terms(cache.size());
    std::vector<double> scratch;
    for (std::size_t c = 0; c < cache.size(); ++c)
        terms[c] = adaptive_terms(cache[c], d + C, c_sigma, /*include_self=*/false, scratch);
    double best = std::numeric_limits<double>::infinity();
    for (double e : c_eta_grid.points()) {
        const double loss = adaptive_loss_at(cache, terms, e);
        if (loss < best) {
            best = loss;
            out.c_eta_joint = e;
        }
    }

    auto mean_lr = [&](const std::vector<Context>& ctxs) {
        double acc = 0.0;
        for (const Context& ctx : ctxs)
            acc += adaptive_lr(ctx, out.c_eta_joint, sigma2, /*include_self=*/false);
        return acc / static_cast<double>(ctxs.size());
    };
    out.mean_eta_dense = mean_lr(dense);
    out.mean_eta_sparse = mean_lr(sparse);
    return out;
}

}  // namespace iclab
