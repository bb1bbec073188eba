// Cross-entropy training of the attention models: exact gradients, Adam with
// optional global-norm clipping, and a deterministic training loop with
// periodic evaluation on a fixed context set.

#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "iclab/attention.hpp"
#include "iclab/taskgen.hpp"

namespace iclab {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t iterations = 1000;
    std::size_t eval_every = 100;
    double init_scale = 0.002;
    double clip = 0.0;  // global l2-norm clip; <= 0 disables
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    bool has_clip() const { return clip > 0.0; }
    void validate() const;
};

// A trainable model: attention weights, optionally followed by the MLP.
struct Model {
    ModelKind kind = ModelKind::linear();
    std::size_t d = 0;
    std::size_t C = 0;
    AttentionWeights w;
    bool with_mlp = false;
    MlpWeights mlp;

    std::size_t dim() const { return d + C; }
    std::vector<double> predict(const Matrix& X) const;
    std::vector<double> predict(const Context& ctx) const;
};

double ce_loss(const std::vector<double>& pred, std::size_t y);

AttentionWeights init_weights(const ModelKind& kind, std::size_t d, std::size_t C,
                              double init_scale, Rng& rng);
MlpWeights init_mlp(std::size_t d, std::size_t C, double init_scale, Rng& rng);
Model make_model(const ModelKind& kind, std::size_t d, std::size_t C, double init_scale,
                 std::uint64_t seed, bool with_mlp = false);

struct Gradients {
    AttentionWeights attn;
    bool with_mlp = false;
    MlpWeights mlp;
};

struct LossGrad {
    double loss = 0.0;
    Gradients g;
};

// mean loss over the batch and its exact gradient for every parameter
LossGrad loss_and_grad(const Model& model, const std::vector<Context>& batch);

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalStats evaluate(const Model& model, const std::vector<Context>& eval_set);

struct EvalRow {
    std::size_t step = 0;
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;
    double c_sigma_eff = 0.0;  // NaN when no extractor is wired in
    double c_eta_eff = 0.0;
    double wall_ms = 0.0;  // the one non-reproducible column
};

struct TrainResult {
    Model model;
    std::vector<EvalRow> trace;
    std::vector<Model> checkpoints;  // one per eval row
    bool diverged = false;
    std::size_t last_step = 0;  // steps actually applied
};

// batch supplier for a given step; must be pure in (step, count)
using ContextSource = std::function<std::vector<Context>(std::size_t step, std::size_t count)>;

// fresh i.i.d. task contexts with per-(step, index) derived seeds
ContextSource make_task_source(const TaskConfig& task, std::uint64_t seed);

// optional per-eval enrichment, e.g. constant extraction on softmax models
using EvalExtra = std::function<std::pair<double, double>(const Model&)>;

TrainResult train(Model init, const TrainConfig& cfg, const std::vector<Context>& eval_set,
                  const ContextSource& source, const EvalExtra& extra = nullptr);

}  // namespace iclab
