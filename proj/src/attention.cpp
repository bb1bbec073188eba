#include "iclab/attention.hpp"

#include <cmath>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"
#include "iclab/numerics.hpp"

namespace iclab {

void AttentionWeights::validate(std::size_t dim) const {
    for (const Matrix* m : {&W_Q, &W_K, &W_V, &W_O}) {
        if (m->rows() != dim || m->cols() != dim)
            throw ValidationError("attention weights must be (d+C)x(d+C)");
        if (!all_finite(*m)) throw ValidationError("attention weights must be finite");
    }
}

void MlpWeights::validate(std::size_t dim) const {
    const std::size_t h = 2 * dim;
    if (W1.rows() != dim || W1.cols() != h || b1.size() != h || W2.rows() != h ||
        W2.cols() != dim || b2.size() != dim)
        throw ValidationError("mlp weights must be (d+C)x2(d+C) / 2(d+C)x(d+C)");
    if (!all_finite(W1) || !all_finite(b1) || !all_finite(W2) || !all_finite(b2))
        throw ValidationError("mlp weights must be finite");
}

Matrix build_token_matrix(const Context& ctx) {
    const std::size_t n = ctx.xs.rows();
    const std::size_t d = ctx.xs.cols();
    const std::size_t C = ctx.class_vectors.rows();
    if (ctx.labels.size() != n || ctx.x_query.size() != d)
        throw ValidationError("token matrix: malformed context");
    Matrix X(n + 1, d + C);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) X(i, j) = ctx.xs(i, j);
        if (ctx.labels[i] >= C) throw ValidationError("token matrix: label out of range");
        X(i, d + ctx.labels[i]) = 1.0;
    }
    for (std::size_t j = 0; j < d; ++j) X(n, j) = ctx.x_query[j];
    return X;
}

namespace {

void apply_activation(const ModelKind& kind, const std::vector<double>& a, const Matrix& keys,
                      const std::vector<double>& scores, std::vector<double>& g) {
    const std::size_t tokens = scores.size();
    const std::size_t dim = keys.cols();
    g = scores;
    switch (kind.tag) {
        case ModelTag::linear:
            break;
        case ModelTag::kernel:
            if (kind.kernel.kind != KernelSpec::Kind::dot) {
                for (std::size_t j = 0; j < tokens; ++j)
                    g[j] = kernel_eval(kind.kernel, a.data(), keys.row(j), dim);
            }
            break;
        case ModelTag::softmax:
        case ModelTag::softmax_frozen_qk: {
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
            kernels::scale(g.data(), inv_sqrt, tokens);
            stable_softmax_inplace(g.data(), tokens);
            break;
        }
    }
}

}  // namespace

QueryForward forward_query(const ModelKind& kind, const AttentionWeights& w, const Matrix& X,
                           std::size_t C) {
    const std::size_t dim = X.cols();
    if (C == 0 || C >= dim) throw ValidationError("forward: need 0 < C < d+C");
    w.validate(dim);
    const std::size_t tokens = X.rows();
    if (tokens < 2) throw ValidationError("forward: token matrix needs context plus query");

    QueryForward f;
    const double* q = X.row(tokens - 1);

    f.a.resize(dim);
    kernels::matvec(f.a.data(), w.W_Q.data(), dim, dim, q);

    f.keys = Matrix(tokens, dim);
    for (std::size_t j = 0; j < tokens; ++j)
        kernels::matvec(f.keys.row(j), w.W_K.data(), dim, dim, X.row(j));

    f.scores.resize(tokens);
    for (std::size_t j = 0; j < tokens; ++j)
        f.scores[j] = kernels::dot(f.a.data(), f.keys.row(j), dim);

    apply_activation(kind, f.a, f.keys, f.scores, f.g);

    f.xbar.assign(dim, 0.0);
    for (std::size_t j = 0; j < tokens; ++j)
        kernels::axpy(f.xbar.data(), f.g[j], X.row(j), dim);

    f.ubar.resize(dim);
    kernels::matvec(f.ubar.data(), w.W_V.data(), dim, dim, f.xbar.data());
    f.upd.resize(dim);
    kernels::matvec(f.upd.data(), w.W_O.data(), dim, dim, f.ubar.data());

    f.q_new.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) f.q_new[i] = q[i] + f.upd[i];

    f.logits.assign(f.q_new.begin() + static_cast<std::ptrdiff_t>(dim - C), f.q_new.end());
    f.probs = stable_softmax(f.logits);
    return f;
}

std::vector<double> forward_predict(const ModelKind& kind, const AttentionWeights& w,
                                    const Matrix& X, std::size_t C) {
    return forward_query(kind, w, X, C).probs;
}

std::vector<double> forward_predict(const ModelKind& kind, const AttentionWeights& w,
                                    const Context& ctx) {
    return forward_predict(kind, w, build_token_matrix(ctx), ctx.class_vectors.rows());
}

TransienceForward forward_transience_full(const AttentionWeights& w, const MlpWeights& mlp,
                                          const Matrix& X, std::size_t C) {
    const std::size_t dim = X.cols();
    mlp.validate(dim);
    TransienceForward t;
    t.attn = forward_query(ModelKind::softmax(), w, X, C);

    const std::size_t h = mlp.b1.size();
    t.z1.resize(h);
    kernels::matvec_t(t.z1.data(), mlp.W1.data(), dim, h, t.attn.q_new.data());
    kernels::axpy(t.z1.data(), 1.0, mlp.b1.data(), h);
    t.hidden = t.z1;
    for (auto& v : t.hidden)
        if (v < 0.0) v = 0.0;

    t.out.resize(dim);
    kernels::matvec_t(t.out.data(), mlp.W2.data(), h, dim, t.hidden.data());
    kernels::axpy(t.out.data(), 1.0, mlp.b2.data(), dim);
    kernels::axpy(t.out.data(), 1.0, t.attn.q_new.data(), dim);

    t.logits.assign(t.out.begin() + static_cast<std::ptrdiff_t>(dim - C), t.out.end());
    t.probs = stable_softmax(t.logits);
    return t;
}

std::vector<double> forward_transience(const AttentionWeights& w, const MlpWeights& mlp,
                                       const Matrix& X, std::size_t C) {
    return forward_transience_full(w, mlp, X, C).probs;
}

Matrix full_sa(const ModelKind& kind, const AttentionWeights& w, const Matrix& X) {
    const std::size_t dim = X.cols();
    w.validate(dim);
    const std::size_t tokens = X.rows();

    Matrix A(tokens, dim), B(tokens, dim);
    for (std::size_t j = 0; j < tokens; ++j) {
        kernels::matvec(A.row(j), w.W_Q.data(), dim, dim, X.row(j));
        kernels::matvec(B.row(j), w.W_K.data(), dim, dim, X.row(j));
    }

    Matrix out = X;
    std::vector<double> a(dim), scores(tokens), g, v(dim), ubar(dim), upd(dim);
    for (std::size_t r = 0; r < tokens; ++r) {
        for (std::size_t i = 0; i < dim; ++i) a[i] = A(r, i);
        for (std::size_t j = 0; j < tokens; ++j)
            scores[j] = kernels::dot(a.data(), B.row(j), dim);
        apply_activation(kind, a, B, scores, g);
        std::vector<double> xbar(dim, 0.0);
        for (std::size_t j = 0; j < tokens; ++j)
            kernels::axpy(xbar.data(), g[j], X.row(j), dim);
        kernels::matvec(ubar.data(), w.W_V.data(), dim, dim, xbar.data());
        kernels::matvec(upd.data(), w.W_O.data(), dim, dim, ubar.data());
        kernels::axpy(out.row(r), 1.0, upd.data(), dim);
    }
    return out;
}

AttentionWeights construct_linear_gd_weights(double eta, std::size_t n, std::size_t d,
                                             std::size_t C) {
    if (n < 1) throw ValidationError("construction needs n >= 1");
    AttentionWeights w;
    w.W_Q = blockdiag_scaled(d, C, 1.0, 0.0);
    w.W_K = blockdiag_scaled(d, C, 1.0, 0.0);
    w.W_V = blockdiag_scaled(d, C, 0.0, 1.0);
    w.W_O = blockdiag_scaled(d, C, 0.0, eta / static_cast<double>(n));
    return w;
}

AttentionWeights construct_kernel_gd_weights(double eta, std::size_t n, std::size_t d,
                                             std::size_t C) {
    return construct_linear_gd_weights(eta, n, d, C);
}

AttentionWeights construct_softmax_weights(double c_sigma, double c_eta, std::size_t d,
                                           std::size_t C) {
    if (!std::isfinite(c_sigma) || !std::isfinite(c_eta))
        throw ValidationError("construction needs finite c_sigma, c_eta");
    AttentionWeights w;
    // c_sigma lives in W_Q so negative values stay representable in a
    // single factor; only the product W_Q^T W_K is meaningful
    w.W_Q = blockdiag_scaled(d, C, c_sigma, 0.0);
    w.W_K = blockdiag_scaled(d, C, 1.0, 0.0);
    w.W_V = blockdiag_scaled(d, C, 0.0, 1.0);
    w.W_O = blockdiag_scaled(d, C, 0.0, c_eta);
    return w;
}

}  // namespace iclab
