#include "iclab/training.hpp"

#include <chrono>
#include <cmath>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"
#include "iclab/numerics.hpp"

namespace iclab {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ValidationError("train: learning_rate must be finite and >= 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (eval_every < 1) throw ValidationError("train: eval_every must be >= 1");
    if (!(init_scale >= 0.0)) throw ValidationError("train: init_scale must be >= 0");
}

std::vector<double> Model::predict(const Matrix& X) const {
    if (with_mlp) return forward_transience(w, mlp, X, C);
    return forward_predict(kind, w, X, C);
}

std::vector<double> Model::predict(const Context& ctx) const {
    return predict(build_token_matrix(ctx));
}

double ce_loss(const std::vector<double>& pred, std::size_t y) {
    if (y >= pred.size()) throw ValidationError("ce_loss: label out of range");
    double p = pred[y];
    if (p < 1e-300) p = 1e-300;
    return -std::log(p);
}

AttentionWeights init_weights(const ModelKind& kind, std::size_t d, std::size_t C,
                              double init_scale, Rng& rng) {
    const std::size_t dim = d + C;
    AttentionWeights w;
    for (Matrix* m : {&w.W_Q, &w.W_K, &w.W_V, &w.W_O}) {
        *m = Matrix(dim, dim);
        rng.fill_gaussian(m->data(), m->size());
        kernels::scale(m->data(), init_scale, m->size());
    }
    if (kind.tag == ModelTag::softmax_frozen_qk) {
        auto fixed = construct_softmax_weights(kind.frozen_c_sigma, 1.0, d, C);
        w.W_Q = fixed.W_Q;
        w.W_K = fixed.W_K;
    }
    return w;
}

MlpWeights init_mlp(std::size_t d, std::size_t C, double init_scale, Rng& rng) {
    const std::size_t dim = d + C;
    MlpWeights m;
    m.W1 = Matrix(dim, 2 * dim);
    m.W2 = Matrix(2 * dim, dim);
    rng.fill_gaussian(m.W1.data(), m.W1.size());
    kernels::scale(m.W1.data(), init_scale, m.W1.size());
    rng.fill_gaussian(m.W2.data(), m.W2.size());
    kernels::scale(m.W2.data(), init_scale, m.W2.size());
    m.b1.assign(2 * dim, 0.0);
    m.b2.assign(dim, 0.0);
    return m;
}

Model make_model(const ModelKind& kind, std::size_t d, std::size_t C, double init_scale,
                 std::uint64_t seed, bool with_mlp) {
    Model m;
    m.kind = kind;
    m.d = d;
    m.C = C;
    Rng rng(seed);
    m.w = init_weights(kind, d, C, init_scale, rng);
    m.with_mlp = with_mlp;
    if (with_mlp) m.mlp = init_mlp(d, C, init_scale, rng);
    return m;
}

namespace {

Gradients zero_gradients(const Model& model) {
    const std::size_t dim = model.dim();
    Gradients g;
    for (Matrix* m : {&g.attn.W_Q, &g.attn.W_K, &g.attn.W_V, &g.attn.W_O}) *m = Matrix(dim, dim);
    g.with_mlp = model.with_mlp;
    if (model.with_mlp) {
        g.mlp.W1 = Matrix(dim, 2 * dim);
        g.mlp.W2 = Matrix(2 * dim, dim);
        g.mlp.b1.assign(2 * dim, 0.0);
        g.mlp.b2.assign(dim, 0.0);
    }
    return g;
}

// backward through the attention query-row update, starting from the
// gradient w.r.t. the updated query token
void backward_attention(const Model& model, const Matrix& X, const QueryForward& f,
                        const std::vector<double>& dq_new, Gradients& g) {
    const std::size_t dim = X.cols();
    const std::size_t tokens = X.rows();
    const double* q = X.row(tokens - 1);
    const auto& w = model.w;

    // q_new = q + W_O ubar
    const std::vector<double>& dupd = dq_new;
    kernels::outer_acc(g.attn.W_O.data(), 1.0, dupd.data(), dim, f.ubar.data(), dim);
    std::vector<double> dubar(dim);
    kernels::matvec_t(dubar.data(), w.W_O.data(), dim, dim, dupd.data());
    kernels::outer_acc(g.attn.W_V.data(), 1.0, dubar.data(), dim, f.xbar.data(), dim);
    std::vector<double> dxbar(dim);
    kernels::matvec_t(dxbar.data(), w.W_V.data(), dim, dim, dubar.data());

    // xbar = sum_j g_j t_j
    std::vector<double> dg(tokens);
    for (std::size_t j = 0; j < tokens; ++j)
        dg[j] = kernels::dot(X.row(j), dxbar.data(), dim);

    std::vector<double> da(dim, 0.0);
    std::vector<double> ds;
    const ModelTag tag = model.kind.tag;
    if (tag == ModelTag::softmax || tag == ModelTag::softmax_frozen_qk) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        double inner = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) inner += f.g[j] * dg[j];
        ds.resize(tokens);
        for (std::size_t j = 0; j < tokens; ++j) ds[j] = scale * f.g[j] * (dg[j] - inner);
    } else if (tag == ModelTag::kernel && model.kind.kernel.kind == KernelSpec::Kind::rbf) {
        // g_j = exp(-|a - b_j|^2 / (2 s2)); chain through both projections
        const double inv_s2 = 1.0 / model.kind.kernel.sigma2;
        std::vector<double> db(dim);
        for (std::size_t j = 0; j < tokens; ++j) {
            const double* b = f.keys.row(j);
            const double c = dg[j] * f.g[j] * inv_s2;
            for (std::size_t i = 0; i < dim; ++i) {
                const double diff = b[i] - f.a[i];
                da[i] += c * diff;
                db[i] = -c * diff;
            }
            kernels::outer_acc(g.attn.W_K.data(), 1.0, db.data(), dim, X.row(j), dim);
        }
    } else {
        // scores used directly (linear / dot kernel)
        ds = dg;
    }

    if (!ds.empty()) {
        // s_j = a . (W_K t_j): da += keys^T ds, dW_K += a (X^T ds)^T
        kernels::matvec_t(da.data(), f.keys.data(), tokens, dim, ds.data());
        std::vector<double> xs_ds(dim, 0.0);
        kernels::matvec_t(xs_ds.data(), X.data(), tokens, dim, ds.data());
        kernels::outer_acc(g.attn.W_K.data(), 1.0, f.a.data(), dim, xs_ds.data(), dim);
    }
    kernels::outer_acc(g.attn.W_Q.data(), 1.0, da.data(), dim, q, dim);
}

double context_loss_grad(const Model& model, const Context& ctx, Gradients& g) {
    const Matrix X = build_token_matrix(ctx);
    const std::size_t dim = X.cols();
    const std::size_t C = model.C;

    if (!model.with_mlp) {
        QueryForward f = forward_query(model.kind, model.w, X, C);
        const double loss = ce_loss(f.probs, ctx.y_query);
        std::vector<double> dq_new(dim, 0.0);
        for (std::size_t c = 0; c < C; ++c)
            dq_new[dim - C + c] = f.probs[c] - (c == ctx.y_query ? 1.0 : 0.0);
        backward_attention(model, X, f, dq_new, g);
        return loss;
    }

    TransienceForward t = forward_transience_full(model.w, model.mlp, X, C);
    const double loss = ce_loss(t.probs, ctx.y_query);
    std::vector<double> dout(dim, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        dout[dim - C + c] = t.probs[c] - (c == ctx.y_query ? 1.0 : 0.0);

    // out = q_new + W2^T hidden + b2
    const std::size_t h = model.mlp.b1.size();
    kernels::axpy(g.mlp.b2.data(), 1.0, dout.data(), dim);
    kernels::outer_acc(g.mlp.W2.data(), 1.0, t.hidden.data(), h, dout.data(), dim);
    std::vector<double> dhidden(h);
    kernels::matvec(dhidden.data(), model.mlp.W2.data(), h, dim, dout.data());
    for (std::size_t i = 0; i < h; ++i)
        if (t.z1[i] <= 0.0) dhidden[i] = 0.0;
    kernels::axpy(g.mlp.b1.data(), 1.0, dhidden.data(), h);
    kernels::outer_acc(g.mlp.W1.data(), 1.0, t.attn.q_new.data(), dim, dhidden.data(), h);

    std::vector<double> dq_new = dout;
    std::vector<double> w1_dh(dim);
    kernels::matvec(w1_dh.data(), model.mlp.W1.data(), dim, h, dhidden.data());
    kernels::axpy(dq_new.data(), 1.0, w1_dh.data(), dim);

    backward_attention(model, X, t.attn, dq_new, g);
    return loss;
}

bool gradients_finite(const Gradients& g) {
    if (!all_finite(g.attn.W_Q) || !all_finite(g.attn.W_K) || !all_finite(g.attn.W_V) ||
        !all_finite(g.attn.W_O))
        return false;
    if (g.with_mlp &&
        (!all_finite(g.mlp.W1) || !all_finite(g.mlp.b1) || !all_finite(g.mlp.W2) ||
         !all_finite(g.mlp.b2)))
        return false;
    return true;
}

// flat views over the trainable parameters, in a fixed order; frozen-QK
// models exclude the pinned query/key factors
template <typename ModelLike, typename Fn>
void for_each_trainable(const ModelKind& kind, ModelLike& m, Fn&& fn) {
    const bool frozen = kind.tag == ModelTag::softmax_frozen_qk;
    if (!frozen) {
        fn(m.attn_wq());
        fn(m.attn_wk());
    }
    fn(m.attn_wv());
    fn(m.attn_wo());
    if (m.has_mlp()) {
        fn(m.mlp_w1());
        fn(m.mlp_b1());
        fn(m.mlp_w2());
        fn(m.mlp_b2());
    }
}

struct Span {
    double* p;
    std::size_t n;
};

struct ModelView {
    Model* m;
    Span attn_wq() { return {m->w.W_Q.data(), m->w.W_Q.size()}; }
    Span attn_wk() { return {m->w.W_K.data(), m->w.W_K.size()}; }
    Span attn_wv() { return {m->w.W_V.data(), m->w.W_V.size()}; }
    Span attn_wo() { return {m->w.W_O.data(), m->w.W_O.size()}; }
    Span mlp_w1() { return {m->mlp.W1.data(), m->mlp.W1.size()}; }
    Span mlp_b1() { return {m->mlp.b1.data(), m->mlp.b1.size()}; }
    Span mlp_w2() { return {m->mlp.W2.data(), m->mlp.W2.size()}; }
    Span mlp_b2() { return {m->mlp.b2.data(), m->mlp.b2.size()}; }
    bool has_mlp() const { return m->with_mlp; }
};

struct GradView {
    Gradients* g;
    Span attn_wq() { return {g->attn.W_Q.data(), g->attn.W_Q.size()}; }
    Span attn_wk() { return {g->attn.W_K.data(), g->attn.W_K.size()}; }
    Span attn_wv() { return {g->attn.W_V.data(), g->attn.W_V.size()}; }
    Span attn_wo() { return {g->attn.W_O.data(), g->attn.W_O.size()}; }
    Span mlp_w1() { return {g->mlp.W1.data(), g->mlp.W1.size()}; }
    Span mlp_b1() { return {g->mlp.b1.data(), g->mlp.b1.size()}; }
    Span mlp_w2() { return {g->mlp.W2.data(), g->mlp.W2.size()}; }
    Span mlp_b2() { return {g->mlp.b2.data(), g->mlp.b2.size()}; }
    bool has_mlp() const { return g->with_mlp; }
};

bool model_finite(const Model& m) {
    if (!all_finite(m.w.W_Q) || !all_finite(m.w.W_K) || !all_finite(m.w.W_V) ||
        !all_finite(m.w.W_O))
        return false;
    if (m.with_mlp && (!all_finite(m.mlp.W1) || !all_finite(m.mlp.b1) ||
                       !all_finite(m.mlp.W2) || !all_finite(m.mlp.b2)))
        return false;
    return true;
}

}  // namespace

LossGrad loss_and_grad(const Model& model, const std::vector<Context>& batch) {
    if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
    LossGrad out;
    out.g = zero_gradients(model);
    double loss_sum = 0.0;
    for (const Context& ctx : batch) loss_sum += context_loss_grad(model, ctx, out.g);

    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss = loss_sum * inv;
    GradView gv{&out.g};
    for_each_trainable(model.kind, gv, [&](Span s) { kernels::scale(s.p, inv, s.n); });
    // frozen models still accumulate into the pinned factors; rescale those
    // too so the reported gradient object is consistently the batch mean
    if (model.kind.tag == ModelTag::softmax_frozen_qk) {
        kernels::scale(out.g.attn.W_Q.data(), inv, out.g.attn.W_Q.size());
        kernels::scale(out.g.attn.W_K.data(), inv, out.g.attn.W_K.size());
    }

    if (!std::isfinite(out.loss) || !gradients_finite(out.g))
        throw NumericError("training diverged: non-finite loss or gradient");
    return out;
}

EvalStats evaluate(const Model& model, const std::vector<Context>& eval_set) {
    if (eval_set.empty()) throw ValidationError("evaluate: empty eval set");
    EvalStats s;
    std::size_t correct = 0;
    for (const Context& ctx : eval_set) {
        auto p = model.predict(ctx);
        s.loss += ce_loss(p, ctx.y_query);
        if (argmax(p) == ctx.y_query) ++correct;
    }
    s.loss /= static_cast<double>(eval_set.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());
    return s;
}

ContextSource make_task_source(const TaskConfig& task, std::uint64_t seed) {
    task.validate();
    return [task, seed](std::size_t step, std::size_t count) {
        std::vector<Context> batch;
        batch.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng(derive_seed(seed, step, i));
            batch.push_back(generate_context(task, rng));
        }
        return batch;
    };
}

TrainResult train(Model init, const TrainConfig& cfg, const std::vector<Context>& eval_set,
                  const ContextSource& source, const EvalExtra& extra) {
    cfg.validate();
    if (!source) throw ValidationError("train: missing context source");

    TrainResult res;
    res.model = std::move(init);

    // adam moment buffers over the flat trainable parameters
    std::size_t total = 0;
    ModelView mv{&res.model};
    for_each_trainable(res.model.kind, mv, [&](Span s) { total += s.n; });
    std::vector<double> mom(total, 0.0), vel(total, 0.0);

    const auto t0 = std::chrono::steady_clock::now();
    Model last_good = res.model;

    for (std::size_t step = 1; step <= cfg.iterations; ++step) {
        LossGrad lg;
        try {
            lg = loss_and_grad(res.model, source(step, cfg.batch_size));
        } catch (const NumericError&) {
            res.diverged = true;
            res.model = last_good;
            return res;
        }

        GradView gv{&lg.g};
        if (cfg.has_clip()) {
            double sq = 0.0;
            for_each_trainable(res.model.kind, gv,
                               [&](Span s) { sq += kernels::dot(s.p, s.p, s.n); });
            const double norm = std::sqrt(sq);
            if (norm > cfg.clip) {
                const double f = cfg.clip / norm;
                for_each_trainable(res.model.kind, gv,
                                   [&](Span s) { kernels::scale(s.p, f, s.n); });
            }
        }

        // bias-corrected adam, parameters walked in the fixed flat order
        const double t = static_cast<double>(step);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        std::size_t off = 0;
        std::vector<Span> params, grads;
        for_each_trainable(res.model.kind, mv, [&](Span s) { params.push_back(s); });
        for_each_trainable(res.model.kind, gv, [&](Span s) { grads.push_back(s); });
        for (std::size_t k = 0; k < params.size(); ++k) {
            double* p = params[k].p;
            const double* g = grads[k].p;
            for (std::size_t i = 0; i < params[k].n; ++i, ++off) {
                mom[off] = cfg.beta1 * mom[off] + (1.0 - cfg.beta1) * g[i];
                vel[off] = cfg.beta2 * vel[off] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mhat = mom[off] / bc1;
                const double vhat = vel[off] / bc2;
                p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }

        if (!model_finite(res.model)) {
            res.diverged = true;
            res.model = last_good;
            return res;
        }
        res.last_step = step;

        if (step % cfg.eval_every == 0) {
            EvalRow row;
            row.step = step;
            const EvalStats stats = evaluate(res.model, eval_set);
            row.eval_loss = stats.loss;
            row.eval_accuracy = stats.accuracy;
            if (extra) {
                auto [cs, ce] = extra(res.model);
                row.c_sigma_eff = cs;
                row.c_eta_eff = ce;
            } else {
                row.c_sigma_eff = std::nan("");
                row.c_eta_eff = std::nan("");
            }
            row.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            res.trace.push_back(row);
            res.checkpoints.push_back(res.model);
            last_good = res.model;
        }
    }
    return res;
}

}  // namespace iclab
