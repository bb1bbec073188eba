#include "iclab/baselines.hpp"

#include <cmath>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"
#include "iclab/numerics.hpp"

namespace iclab {

KernelSpec KernelSpec::rbf(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw ValidationError("rbf kernel needs finite sigma2 > 0");
    return {Kind::rbf, sigma2};
}

double kernel_eval(const KernelSpec& k, const double* a, const double* b, std::size_t d) {
    if (k.kind == KernelSpec::Kind::dot) return kernels::dot(a, b, d);
    double dist2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        dist2 += diff * diff;
    }
    return std::exp(-dist2 / (2.0 * k.sigma2));
}

namespace {

void check_context(const Context& ctx) {
    const std::size_t n = ctx.xs.rows();
    const std::size_t C = ctx.class_vectors.rows();
    if (n == 0 || C == 0) throw ValidationError("predictor: empty context");
    if (ctx.labels.size() != n) throw ValidationError("predictor: labels/xs size mismatch");
    if (ctx.x_query.size() != ctx.xs.cols())
        throw ValidationError("predictor: query dimension mismatch");
    for (std::size_t y : ctx.labels)
        if (y >= C) throw ValidationError("predictor: label out of range");
}

std::vector<double> query_dots(const Context& ctx) {
    std::vector<double> dots(ctx.xs.rows());
    for (std::size_t i = 0; i < dots.size(); ++i)
        dots[i] = kernels::dot(ctx.xs.row(i), ctx.x_query.data(), ctx.xs.cols());
    return dots;
}

}  // namespace

std::vector<double> gd_step_predict(const Context& ctx, double eta) {
    check_context(ctx);
    const std::size_t C = ctx.class_vectors.rows();
    const auto dots = query_dots(ctx);
    std::vector<double> logits(C, 0.0);
    for (std::size_t i = 0; i < dots.size(); ++i) logits[ctx.labels[i]] += dots[i];
    const double s = eta / static_cast<double>(dots.size());
    kernels::scale(logits.data(), s, C);
    stable_softmax_inplace(logits.data(), C);
    return logits;
}

std::vector<double> kernel_gd_predict(const Context& ctx, double eta, const KernelSpec& kernel) {
    check_context(ctx);
    const std::size_t C = ctx.class_vectors.rows();
    const std::size_t d = ctx.xs.cols();
    std::vector<double> logits(C, 0.0);
    for (std::size_t i = 0; i < ctx.xs.rows(); ++i)
        logits[ctx.labels[i]] += kernel_eval(kernel, ctx.xs.row(i), ctx.x_query.data(), d);
    const double s = eta / static_cast<double>(ctx.xs.rows());
    kernels::scale(logits.data(), s, C);
    stable_softmax_inplace(logits.data(), C);
    return logits;
}

double adaptive_lr(const Context& ctx, double c_eta, double sigma2, bool include_self) {
    check_context(ctx);
    if (!(sigma2 > 0.0)) throw ValidationError("adaptive_lr needs sigma2 > 0");
    const auto dots = query_dots(ctx);
    // c_eta e^{1/s2} n / sum_i e^{dot_i/s2} == c_eta n / sum_i e^{(dot_i-1)/s2};
    // the shifted exponents are <= 0 on the sphere, so nothing overflows
    double denom = include_self ? 1.0 : 0.0;
    for (double t : dots) denom += std::exp((t - 1.0) / sigma2);
    if (denom == 0.0) throw NumericError("adaptive learning rate overflow");
    return c_eta * static_cast<double>(dots.size()) / denom;
}

std::vector<double> adaptive_predict(const Context& ctx, double c_eta, double c_sigma,
                                     bool include_self) {
    check_context(ctx);
    const std::size_t C = ctx.class_vectors.rows();
    const std::size_t d = ctx.xs.cols();
    const double sqrt_dim = std::sqrt(static_cast<double>(d + C));

    auto t = query_dots(ctx);
    kernels::scale(t.data(), c_sigma / sqrt_dim, t.size());
    const double t_self = c_sigma / sqrt_dim;

    double shift = kernels::max_value(t.data(), t.size());
    if (include_self && t_self > shift) shift = t_self;
    for (auto& v : t) v -= shift;
    kernels::exp_inplace(t.data(), t.size());

    double z = kernels::sum(t.data(), t.size());
    if (include_self) z += std::exp(t_self - shift);

    std::vector<double> logits(C, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) logits[ctx.labels[i]] += t[i];
    kernels::scale(logits.data(), c_eta / z, C);
    stable_softmax_inplace(logits.data(), C);
    return logits;
}

}  // namespace iclab
