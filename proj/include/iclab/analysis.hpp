// Comparison machinery between trained attention and the closed-form
// predictors: query-sensitivity alignment, per-context metrics, grid-search
// fits over cached dot products, effective-constant extraction, and the
// adaptive-learning-rate diagnostics.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "iclab/attention.hpp"
#include "iclab/baselines.hpp"
#include "iclab/taskgen.hpp"

namespace iclab {

// Any map from a context to a probability vector over its C classes.
using Predictor = std::function<std::vector<double>(const Context&)>;

// Central-difference gradient of prediction j w.r.t. x_query, perturbed in
// raw Euclidean coordinates (no re-normalization onto the sphere).
std::vector<double> sensitivity(const Predictor& p, const Context& ctx, std::size_t j,
                                double h = 1e-4);

// All classes at once from the same 2d predictor calls; row j = class j.
Matrix sensitivity_all(const Predictor& p, const Context& ctx, double h = 1e-4);

struct AlignmentReport {
    double preds_diff = 0.0;   // mean over contexts of ||y_a - y_b||
    double cos_sim = 0.0;      // mean over contexts and classes of sensitivity cosine
    double model_diff = 0.0;   // mean over contexts of (1/C) sum_j ||s_a_j - s_b_j||
    std::size_t n_contexts = 0;  // contexts that entered the averages
    std::size_t n_excluded = 0;  // contexts dropped for non-finite sensitivities
};

// Contexts where either predictor produces non-finite values (saturated
// attention) are counted in n_excluded and skipped; throws NumericError if
// nothing survives.
AlignmentReport alignment(const Predictor& a, const Predictor& b,
                          const std::vector<Context>& contexts, double h = 1e-4);

struct PerContextMetrics {
    double loss = 0.0;       // -ln p_correct (floored like the training loss)
    double entropy = 0.0;    // in [0, ln C]
    double p_correct = 0.0;  // probability assigned to the true class
};

std::vector<PerContextMetrics> per_context(const Predictor& p,
                                           const std::vector<Context>& contexts);

struct PredictorStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

PredictorStats evaluate_predictor(const Predictor& p, const std::vector<Context>& contexts);

// One grid dimension; points() includes both endpoints.
struct GridAxis {
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    bool log_scale = true;
    void validate() const;  // min < max, count >= 2, log grids positive
    std::vector<double> points() const;
};

// Grid searches minimizing mean cross-entropy over the given contexts.
// Per context the dot products x_i . x_query are computed once and reused
// across every grid point; ties resolve to the lexicographically smallest
// parameters in the declared axis order.

struct GdFitPoint {
    double eta = 0.0;
    double loss = 0.0;
};

struct GdFit {
    double eta = 0.0;
    double loss = 0.0;
    std::vector<GdFitPoint> surface;
};

GdFit fit_gd_step(const std::vector<Context>& contexts, const GridAxis& eta);

struct KernelFitPoint {
    double eta = 0.0;
    double sigma2 = 0.0;
    double loss = 0.0;
};

struct KernelFit {
    double eta = 0.0;
    double sigma2 = 0.0;
    double loss = 0.0;
    std::vector<KernelFitPoint> surface;
};

// RBF kernel GD; on unit vectors the kernel reduces to e^{(dot-1)/sigma2}
KernelFit fit_kernel_gd(const std::vector<Context>& contexts, const GridAxis& eta,
                        const GridAxis& sigma2);

struct AdaptiveFitPoint {
    double c_sigma = 0.0;
    double c_eta = 0.0;
    double loss = 0.0;
};

struct AdaptiveFit {
    double c_sigma = 0.0;
    double c_eta = 0.0;
    double loss = 0.0;
    std::vector<AdaptiveFitPoint> surface;
};

AdaptiveFit fit_adaptive(const std::vector<Context>& contexts, const GridAxis& c_sigma,
                         const GridAxis& c_eta, bool include_self = false);

struct ExtractedConstants {
    double c_sigma_eff = 0.0;  // mean diagonal of the query-key product's x-block
    double c_eta_eff = 0.0;    // mean diagonal of the shifted value-path y-block
    double residual = 0.0;     // Frobenius mass outside the two designated blocks
};

ExtractedConstants extract_constants(const AttentionWeights& w, std::size_t d, std::size_t C);

enum class Strategy { selection, elimination, indeterminate };

const char* strategy_name(Strategy s);

// Sign heuristic on the extracted constants: a positive pair attends to the
// nearest exemplars and adds their labels, a negative pair attends to the
// furthest and subtracts.
Strategy classify_strategy(const AttentionWeights& w, std::size_t d, std::size_t C);

struct VariabilityRow {
    double sigma2 = 0.0;
    double ratio = 0.0;  // std/mean over contexts of S = sum_i e^{(x_i.x_q - 1)/sigma2}
};

std::vector<VariabilityRow> adaptive_variability(const std::vector<Context>& contexts,
                                                 const std::vector<double>& sigma2_grid);

struct DenseSparseFit {
    double eta_dense = 0.0;   // kernel-GD optimum on the dense-query dataset
    double eta_sparse = 0.0;  // and on the sparse-query dataset
    double eta_joint = 0.0;   // fit on the union
    double loss_dense = 0.0;  // each dataset's loss at its own optimum
    double loss_sparse = 0.0;
    double c_eta_joint = 0.0;       // adaptive coefficient fit on the union
    double mean_eta_dense = 0.0;    // mean adaptive learning rate per dataset
    double mean_eta_sparse = 0.0;
};

// Kernel-GD learning-rate fits at a fixed kernel width, plus the adaptive
// fit whose per-context learning rate separates the two query placements.
DenseSparseFit dense_sparse_eta_fit(const std::vector<Context>& dense,
                                    const std::vector<Context>& sparse, double sigma2,
                                    const GridAxis& eta_grid, const GridAxis& c_eta_grid);

}  // namespace iclab
