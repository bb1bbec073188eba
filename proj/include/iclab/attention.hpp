// Single-layer single-head self-attention over concatenated [x | onehot(y)]
// tokens: linear, kernel-activated, and softmax variants, the frozen-QK
// softmax variant, the attention+MLP model, and the explicit weight
// constructions that realize the closed-form predictors.

#pragma once

#include <cstddef>
#include <vector>

#include "iclab/baselines.hpp"
#include "iclab/matrix.hpp"
#include "iclab/taskgen.hpp"

namespace iclab {

struct AttentionWeights {
    Matrix W_Q, W_K, W_V, W_O;  // all (d+C) x (d+C)
    void validate(std::size_t dim) const;
};

enum class ModelTag { linear, kernel, softmax, softmax_frozen_qk };

struct ModelKind {
    ModelTag tag = ModelTag::linear;
    KernelSpec kernel = KernelSpec::dot_product();  // kernel tag only
    double frozen_c_sigma = 0.0;                    // softmax_frozen_qk only

    static ModelKind linear() { return {ModelTag::linear, KernelSpec::dot_product(), 0.0}; }
    static ModelKind kernel_kind(const KernelSpec& k) { return {ModelTag::kernel, k, 0.0}; }
    static ModelKind softmax() { return {ModelTag::softmax, KernelSpec::dot_product(), 0.0}; }
    static ModelKind frozen(double c_sigma) {
        return {ModelTag::softmax_frozen_qk, KernelSpec::dot_product(), c_sigma};
    }
    // softmax variants scale scores by 1/sqrt(d+C); linear/kernel do not
    bool softmax_scores() const {
        return tag == ModelTag::softmax || tag == ModelTag::softmax_frozen_qk;
    }
};

struct MlpWeights {
    Matrix W1;               // (d+C) x h, h = 2(d+C)
    std::vector<double> b1;  // h
    Matrix W2;               // h x (d+C)
    std::vector<double> b2;  // d+C
    void validate(std::size_t dim) const;
};

// rows 0..n-1 = [x_i | onehot(y_i)], row n = [x_query | zeros]
Matrix build_token_matrix(const Context& ctx);

// Query-row forward pass with every intermediate the backward pass needs.
struct QueryForward {
    std::vector<double> a;       // W_Q q
    Matrix keys;                 // (n+1) x dim, row j = W_K t_j
    std::vector<double> scores;  // raw a . keys[j]
    std::vector<double> g;       // attention coefficients after activation
    std::vector<double> xbar;    // X^T g
    std::vector<double> ubar;    // W_V xbar
    std::vector<double> upd;     // W_O ubar, added to the query token
    std::vector<double> q_new;   // query token + upd
    std::vector<double> logits;  // y-entries of q_new
    std::vector<double> probs;   // stable softmax of logits
};

QueryForward forward_query(const ModelKind& kind, const AttentionWeights& w, const Matrix& X,
                           std::size_t C);

std::vector<double> forward_predict(const ModelKind& kind, const AttentionWeights& w,
                                    const Matrix& X, std::size_t C);
std::vector<double> forward_predict(const ModelKind& kind, const AttentionWeights& w,
                                    const Context& ctx);

// attention + two-layer rectifier MLP applied to the post-attention query
// token, with a residual connection around the MLP
struct TransienceForward {
    QueryForward attn;
    std::vector<double> z1;      // W1^T q_new + b1, pre-activation
    std::vector<double> hidden;  // max(0, z1)
    std::vector<double> out;     // q_new + W2^T hidden + b2
    std::vector<double> logits;
    std::vector<double> probs;
};

TransienceForward forward_transience_full(const AttentionWeights& w, const MlpWeights& mlp,
                                          const Matrix& X, std::size_t C);
std::vector<double> forward_transience(const AttentionWeights& w, const MlpWeights& mlp,
                                       const Matrix& X, std::size_t C);

// whole-matrix SA(X) for inspection; forward_query only touches the query row
Matrix full_sa(const ModelKind& kind, const AttentionWeights& w, const Matrix& X);

// Weight factorizations realizing the closed forms. Only the products
// W_Q^T W_K and W_V^T W_O^T are meaningful; the factor split here is a fixed
// convention so checkpoints reproduce.
AttentionWeights construct_linear_gd_weights(double eta, std::size_t n, std::size_t d,
                                             std::size_t C);
AttentionWeights construct_kernel_gd_weights(double eta, std::size_t n, std::size_t d,
                                             std::size_t C);
AttentionWeights construct_softmax_weights(double c_sigma, double c_eta, std::size_t d,
                                           std::size_t C);

}  // namespace iclab
