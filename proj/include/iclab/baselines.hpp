// Closed-form in-context predictors, all one step of (kernel) gradient
// descent on cross-entropy from zero initial weights: plain GD on the dot
// product, kernel GD, and kernel GD with the context-adaptive learning rate.

#pragma once

#include <cstddef>
#include <vector>

#include "iclab/taskgen.hpp"

namespace iclab {

struct KernelSpec {
    enum class Kind { dot, rbf };
    Kind kind = Kind::dot;
    double sigma2 = 1.0;  // rbf width, ignored for dot

    static KernelSpec dot_product() { return {Kind::dot, 1.0}; }
    static KernelSpec rbf(double sigma2);  // validates sigma2 > 0
};

double kernel_eval(const KernelSpec& k, const double* a, const double* b, std::size_t d);

// softmax( (eta/n) sum_i y_i (x_i . x_query) ), y_i one-hot
std::vector<double> gd_step_predict(const Context& ctx, double eta);

// softmax( (eta/n) sum_i y_i k(x_i, x_query) )
std::vector<double> kernel_gd_predict(const Context& ctx, double eta, const KernelSpec& kernel);

// eta(X) = c_eta e^{1/sigma2} n / sum_i e^{x_i . x_query / sigma2}, the
// self term joining the sum when include_self is set. Evaluated in a
// shifted form so no intermediate overflows.
double adaptive_lr(const Context& ctx, double c_eta, double sigma2, bool include_self);

// softmax( c_eta sum_i y_i e^{c_sigma x_i.x_query/sqrt(d+C)} / Z ) with Z the
// matching normalizer; equals kernel GD at sigma2 = sqrt(d+C)/c_sigma with
// the adaptive learning rate. include_self adds the query's own attention
// weight to Z, matching what a non-masked attention layer computes.
std::vector<double> adaptive_predict(const Context& ctx, double c_eta, double c_sigma,
                                     bool include_self);

}  // namespace iclab
