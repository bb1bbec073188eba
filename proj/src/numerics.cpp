#include "iclab/numerics.hpp"

#include <cmath>

#include "iclab/errors.hpp"
#include "iclab/kernels.hpp"

namespace iclab {

void stable_softmax_inplace(double* logits, std::size_t n) {
    if (n == 0) throw NumericError("softmax of empty vector");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(logits[i])) throw NumericError("non-finite logits");
    const double m = kernels::max_value(logits, n);
    for (std::size_t i = 0; i < n; ++i) logits[i] -= m;
    kernels::exp_inplace(logits, n);
    const double z = kernels::sum(logits, n);
    kernels::scale(logits, 1.0 / z, n);
}

std::vector<double> stable_softmax(const std::vector<double>& logits) {
    std::vector<double> p = logits;
    stable_softmax_inplace(p.data(), p.size());
    return p;
}

double logsumexp(const double* x, std::size_t n) {
    if (n == 0) throw NumericError("logsumexp of empty vector");
    const double m = kernels::max_value(x, n);
    if (!std::isfinite(m)) throw NumericError("non-finite logits");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

double cross_entropy_from_logits(const std::vector<double>& logits, std::size_t label) {
    if (label >= logits.size()) throw ValidationError("cross-entropy label out of range");
    for (double v : logits)
        if (!std::isfinite(v)) throw NumericError("non-finite logits");
    return logsumexp(logits.data(), logits.size()) - logits[label];
}

std::size_t argmax(const std::vector<double>& v) {
    if (v.empty()) throw ValidationError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace iclab
