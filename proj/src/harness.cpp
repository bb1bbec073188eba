#include "iclab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "iclab/analysis.hpp"
#include "iclab/attention.hpp"
#include "iclab/errors.hpp"
#include "iclab/io.hpp"
#include "iclab/rng.hpp"
#include "iclab/svgplot.hpp"
#include "iclab/taskgen.hpp"
#include "iclab/training.hpp"

namespace iclab::harness {

namespace {

namespace fs = std::filesystem;
using io::Json;

constexpr const char* kCodeVersion = "0.1.0";
constexpr std::uint64_t kConfigVersion = 1;

// One salt per derived random stream, so training batches, eval sets, fit
// sets, and scatter sets never collide for a given run seed.
constexpr std::uint64_t kSaltInit = 101;
constexpr std::uint64_t kSaltBatch = 102;
constexpr std::uint64_t kSaltEval = 103;
constexpr std::uint64_t kSaltAlign = 104;
constexpr std::uint64_t kSaltScatter = 105;
constexpr std::uint64_t kSaltFit = 106;
constexpr std::uint64_t kSaltClasses = 107;
constexpr std::uint64_t kSaltIwl = 108;
constexpr std::uint64_t kSaltCompareEval = 109;
constexpr std::uint64_t kSaltCompareFit = 110;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

struct CommonArgs {
    fs::path config;
    fs::path out;
    std::uint64_t seed = 0;
};

// ------------------------------------------------------------------ manifest

// Guards the output directory (a finished run is never silently overwritten)
// and records every artifact written under it.
class RunDir {
public:
    RunDir(const fs::path& out, const std::string& command, const std::string& config_hash,
           std::uint64_t seed) {
        if (out.empty()) fail("--out must not be empty");
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) fail("cannot create output directory " + out.string());
        if (fs::exists(out / "manifest.json"))
            fail("output directory " + out.string() +
                 " already holds a finished run (manifest.json exists); use a fresh directory");
        dir_ = out;
        manifest_["format"] = "iclab.manifest";
        manifest_["version"] = kConfigVersion;
        manifest_["command"] = command;
        manifest_["config_hash"] = config_hash;
        manifest_["seed"] = seed;
        manifest_["code_version"] = kCodeVersion;
        manifest_["started"] = io::iso8601_utc_now();
    }

    const fs::path& dir() const { return dir_; }

    // registers an artifact and returns its full path
    fs::path emit(const std::string& name) {
        if (std::find(names_.begin(), names_.end(), name) != names_.end())
            fail("duplicate artifact name " + name);
        names_.push_back(name);
        return dir_ / name;
    }

    void finish() {
        for (const std::string& name : names_)
            if (!fs::exists(dir_ / name)) fail("artifact missing at finalize: " + name);
        manifest_["finished"] = io::iso8601_utc_now();
        manifest_["artifacts"] = names_;
        io::write_json_file(dir_ / "manifest.json", manifest_, 2);
    }

private:
    fs::path dir_;
    Json manifest_ = Json::object();
    std::vector<std::string> names_;
};

// ------------------------------------------------------------ config parsing

Json load_config(const fs::path& path, const std::string& command) {
    const Json j = io::read_json_file(path);
    const std::string what = path.string();
    if (!j.is_object()) fail(what + ": config must be a JSON object");
    if (io::require_uint(j, "version", what) != kConfigVersion)
        fail(what + ": unsupported config version");
    const std::string cmd = io::require_string(j, "command", what);
    if (cmd != command)
        fail(what + ": config is for command \"" + cmd + "\", invoked as \"" + command + "\"");
    return j;
}

double optional_double(const Json& j, const std::string& key, double fallback,
                       const std::string& what) {
    return j.contains(key) ? io::require_double(j, key, what) : fallback;
}

std::uint64_t optional_uint(const Json& j, const std::string& key, std::uint64_t fallback,
                            const std::string& what) {
    return j.contains(key) ? io::require_uint(j, key, what) : fallback;
}

bool optional_bool(const Json& j, const std::string& key, bool fallback,
                   const std::string& what) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (!v.is_boolean()) fail(what + ": \"" + key + "\" must be a boolean");
    return v.get<bool>();
}

TaskConfig parse_task(const Json& j, const std::string& what) {
    io::check_keys(j, {"d", "C", "n"}, what);
    TaskConfig t;
    t.d = static_cast<std::size_t>(io::require_uint(j, "d", what));
    t.C = static_cast<std::size_t>(io::require_uint(j, "C", what));
    t.n = static_cast<std::size_t>(io::require_uint(j, "n", what));
    t.validate();
    return t;
}

TrainConfig parse_train(const Json& j, std::uint64_t seed, const std::string& what) {
    io::check_keys(j, {"learning_rate", "batch_size", "iterations", "eval_every", "init_scale",
                       "clip", "beta1", "beta2", "eps"},
                   what);
    TrainConfig c;
    c.learning_rate = optional_double(j, "learning_rate", c.learning_rate, what);
    c.batch_size =
        static_cast<std::size_t>(optional_uint(j, "batch_size", c.batch_size, what));
    c.iterations =
        static_cast<std::size_t>(optional_uint(j, "iterations", c.iterations, what));
    c.eval_every =
        static_cast<std::size_t>(optional_uint(j, "eval_every", c.eval_every, what));
    c.init_scale = optional_double(j, "init_scale", c.init_scale, what);
    c.clip = optional_double(j, "clip", c.clip, what);
    c.beta1 = optional_double(j, "beta1", c.beta1, what);
    c.beta2 = optional_double(j, "beta2", c.beta2, what);
    c.eps = optional_double(j, "eps", c.eps, what);
    c.seed = seed;
    c.validate();
    return c;
}

GridAxis parse_axis(const Json& j, const std::string& what) {
    io::check_keys(j, {"min", "max", "count", "log"}, what);
    GridAxis a;
    a.min = io::require_double(j, "min", what);
    a.max = io::require_double(j, "max", what);
    a.count = static_cast<std::size_t>(io::require_uint(j, "count", what));
    a.log_scale = optional_bool(j, "log", true, what);
    a.validate();
    return a;
}

std::string kind_name(const ModelKind& kind) {
    switch (kind.tag) {
        case ModelTag::linear: return "linear";
        case ModelTag::kernel:
            return kind.kernel.kind == KernelSpec::Kind::dot
                       ? "kernel_dot"
                       : "kernel_rbf(" + io::format_double(kind.kernel.sigma2) + ")";
        case ModelTag::softmax: return "softmax";
        case ModelTag::softmax_frozen_qk:
            return "softmax_frozen_qk(" + io::format_double(kind.frozen_c_sigma) + ")";
    }
    return "?";
}

bool softmax_family(const ModelKind& kind) {
    return kind.tag == ModelTag::softmax || kind.tag == ModelTag::softmax_frozen_qk;
}

// ------------------------------------------------------------------ helpers

std::vector<Context> contexts_for(const TaskConfig& task, std::uint64_t seed,
                                  std::size_t count) {
    return generate_dataset(task, seed, count).contexts;
}

Predictor predictor_of(Model model) {
    return [m = std::move(model)](const Context& ctx) { return m.predict(ctx); };
}

Predictor gd_predictor(double eta) {
    return [eta](const Context& ctx) { return gd_step_predict(ctx, eta); };
}

Predictor kernel_predictor(double eta, double sigma2) {
    const KernelSpec k = KernelSpec::rbf(sigma2);
    return [eta, k](const Context& ctx) { return kernel_gd_predict(ctx, eta, k); };
}

Predictor adaptive_predictor(double c_sigma, double c_eta, bool include_self) {
    return [=](const Context& ctx) {
        return adaptive_predict(ctx, c_eta, c_sigma, include_self);
    };
}

std::string checkpoint_name(std::size_t step) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "checkpoint_%08zu.json", step);
    return buf;
}

bool looks_like_numbered_checkpoint(const std::string& name) {
    const std::string prefix = "checkpoint_";
    const std::string suffix = ".json";
    if (name.size() <= prefix.size() + suffix.size()) return false;
    if (name.compare(0, prefix.size(), prefix) != 0) return false;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return false;
    for (std::size_t i = prefix.size(); i + suffix.size() < name.size(); ++i)
        if (name[i] < '0' || name[i] > '9') return false;
    return true;
}

// a single checkpoint file, or every numbered checkpoint in a directory
// (checkpoint_final.json is the last numbered step again, so it is skipped)
std::vector<io::Checkpoint> collect_checkpoints(const fs::path& where) {
    if (!fs::exists(where)) fail("checkpoint path " + where.string() + " does not exist");
    std::vector<io::Checkpoint> out;
    if (fs::is_directory(where)) {
        for (const auto& entry : fs::directory_iterator(where)) {
            if (!entry.is_regular_file()) continue;
            if (looks_like_numbered_checkpoint(entry.path().filename().string()))
                out.push_back(io::load_checkpoint(entry.path()));
        }
        if (out.empty()) fail("no checkpoint_*.json files in " + where.string());
        std::sort(out.begin(), out.end(),
                  [](const io::Checkpoint& a, const io::Checkpoint& b) { return a.step < b.step; });
    } else {
        out.push_back(io::load_checkpoint(where));
    }
    return out;
}

void require_shape(const io::Checkpoint& ckpt, const TaskConfig& task, const std::string& what) {
    if (ckpt.d != task.d || ckpt.C != task.C)
        fail(what + ": checkpoint shape (d=" + std::to_string(ckpt.d) +
             ", C=" + std::to_string(ckpt.C) + ") does not match task (d=" +
             std::to_string(task.d) + ", C=" + std::to_string(task.C) + ")");
}

// ------------------------------------------------------------------ baselines

// A closed-form predictor, either at fixed parameters or grid-fitted on
// `fit_set` by mean cross-entropy.
struct ResolvedBaseline {
    std::string type;
    Predictor pred;
    Json info = Json::object();
};

ResolvedBaseline resolve_baseline(const Json& bj, const std::vector<Context>& fit_set,
                                  bool default_include_self, const std::string& what) {
    const std::string type = io::require_string(bj, "type", what);
    ResolvedBaseline out;
    out.type = type;
    out.info["type"] = type;

    auto need_fit_set = [&] {
        if (fit_set.empty()) fail(what + ": baseline fitting needs a non-empty fit set");
    };

    if (type == "gd_step") {
        io::check_keys(bj, {"type", "eta", "eta_grid"}, what);
        if (bj.contains("eta") == bj.contains("eta_grid"))
            fail(what + ": give exactly one of \"eta\" or \"eta_grid\"");
        if (bj.contains("eta")) {
            const double eta = io::require_double(bj, "eta", what);
            out.info["eta"] = eta;
            out.pred = gd_predictor(eta);
        } else {
            need_fit_set();
            const GdFit f = fit_gd_step(fit_set, parse_axis(bj.at("eta_grid"), what));
            out.info["eta"] = f.eta;
            out.info["fit_loss"] = f.loss;
            out.pred = gd_predictor(f.eta);
        }
        return out;
    }

    if (type == "kernel_gd") {
        io::check_keys(bj, {"type", "eta", "sigma2", "eta_grid", "sigma2_grid"}, what);
        const bool fixed = bj.contains("eta") && bj.contains("sigma2");
        const bool grids = bj.contains("eta_grid") && bj.contains("sigma2_grid");
        if (fixed == grids)
            fail(what + ": give (\"eta\", \"sigma2\") or (\"eta_grid\", \"sigma2_grid\")");
        if (fixed) {
            const double eta = io::require_double(bj, "eta", what);
            const double sigma2 = io::require_double(bj, "sigma2", what);
            KernelSpec::rbf(sigma2);  // validates
            out.info["eta"] = eta;
            out.info["sigma2"] = sigma2;
            out.pred = kernel_predictor(eta, sigma2);
        } else {
            need_fit_set();
            const KernelFit f = fit_kernel_gd(fit_set, parse_axis(bj.at("eta_grid"), what),
                                              parse_axis(bj.at("sigma2_grid"), what));
            out.info["eta"] = f.eta;
            out.info["sigma2"] = f.sigma2;
            out.info["fit_loss"] = f.loss;
            out.pred = kernel_predictor(f.eta, f.sigma2);
        }
        return out;
    }

    if (type == "adaptive") {
        io::check_keys(bj, {"type", "c_sigma", "c_eta", "c_sigma_grid", "c_eta_grid",
                            "include_self"},
                       what);
        const bool include_self = optional_bool(bj, "include_self", default_include_self, what);
        out.info["include_self"] = include_self;
        const bool fixed = bj.contains("c_sigma") && bj.contains("c_eta");
        const bool grids = bj.contains("c_sigma_grid") && bj.contains("c_eta_grid");
        if (fixed == grids)
            fail(what + ": give (\"c_sigma\", \"c_eta\") or (\"c_sigma_grid\", \"c_eta_grid\")");
        if (fixed) {
            const double c_sigma = io::require_double(bj, "c_sigma", what);
            const double c_eta = io::require_double(bj, "c_eta", what);
            out.info["c_sigma"] = c_sigma;
            out.info["c_eta"] = c_eta;
            out.pred = adaptive_predictor(c_sigma, c_eta, include_self);
        } else {
            need_fit_set();
            const AdaptiveFit f =
                fit_adaptive(fit_set, parse_axis(bj.at("c_sigma_grid"), what),
                             parse_axis(bj.at("c_eta_grid"), what), include_self);
            out.info["c_sigma"] = f.c_sigma;
            out.info["c_eta"] = f.c_eta;
            out.info["fit_loss"] = f.loss;
            out.pred = adaptive_predictor(f.c_sigma, f.c_eta, include_self);
        }
        return out;
    }

    fail(what + ": unknown baseline type \"" + type + "\"");
}

// ------------------------------------------------------------------- cmd: gen

int cmd_gen(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "gen");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "task", "count", "mode", "dense_sparse"}, what);
    const TaskConfig task = parse_task(io::require(cfg, "task", what), what + ": task");
    const std::size_t count = static_cast<std::size_t>(io::require_uint(cfg, "count", what));
    if (count == 0) fail(what + ": count must be positive");
    std::string mode = "iid";
    if (cfg.contains("mode")) mode = io::require_string(cfg, "mode", what);

    RunDir run(args.out, "gen", io::fnv1a_hex(io::read_text(args.config)), args.seed);
    if (mode == "iid") {
        const Dataset ds = generate_dataset(task, args.seed, count);
        io::save_dataset(run.emit("dataset.json"), ds);
        std::cout << "gen: d=" << task.d << " C=" << task.C << " n=" << task.n
                  << " count=" << ds.contexts.size() << " seed=" << args.seed
                  << " -> dataset.json\n";
    } else if (mode == "dense_sparse") {
        DenseSparseOptions opt;
        if (cfg.contains("dense_sparse")) {
            const Json& oj = cfg.at("dense_sparse");
            const std::string owhat = what + ": dense_sparse";
            io::check_keys(oj, {"mean_threshold", "K", "near_threshold"}, owhat);
            opt.mean_threshold = optional_double(oj, "mean_threshold", opt.mean_threshold, owhat);
            opt.K = static_cast<std::size_t>(optional_uint(oj, "K", opt.K, owhat));
            opt.near_threshold = optional_double(oj, "near_threshold", opt.near_threshold, owhat);
        }
        const auto [dense, sparse] = generate_dense_sparse_pair(task, args.seed, count, opt);
        io::save_dataset(run.emit("dataset_dense.json"), dense);
        io::save_dataset(run.emit("dataset_sparse.json"), sparse);
        std::cout << "gen: dense/sparse pair, kept " << dense.contexts.size() << " of " << count
                  << " candidate contexts -> dataset_dense.json, dataset_sparse.json\n";
    } else {
        fail(what + ": unknown mode \"" + mode + "\"");
    }
    run.finish();
    return 0;
}

// ----------------------------------------------------------------- cmd: train

struct TraceFiles {
    bool extract_columns = false;
};

void write_trace_csv(const fs::path& path, const std::vector<EvalRow>& trace,
                     const TraceFiles& opts) {
    std::vector<std::string> header = {"step", "eval_loss", "eval_accuracy"};
    if (opts.extract_columns) {
        header.push_back("c_sigma_eff");
        header.push_back("c_eta_eff");
    }
    header.push_back("wall_ms");
    io::CsvWriter csv(header);
    for (const EvalRow& row : trace) {
        std::vector<std::string> cells = {io::format_uint(row.step),
                                          io::format_double(row.eval_loss),
                                          io::format_double(row.eval_accuracy)};
        if (opts.extract_columns) {
            cells.push_back(io::format_double(row.c_sigma_eff));
            cells.push_back(io::format_double(row.c_eta_eff));
        }
        cells.push_back(io::format_double(row.wall_ms));
        csv.add_row(cells);
    }
    csv.write(path);
}

int cmd_train(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "train");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "kind", "task", "train", "eval_contexts"}, what);
    const ModelKind kind = io::kind_from_json(io::require(cfg, "kind", what), what + ": kind");
    const TaskConfig task = parse_task(io::require(cfg, "task", what), what + ": task");
    const TrainConfig tcfg =
        parse_train(io::require(cfg, "train", what), args.seed, what + ": train");
    const std::size_t eval_contexts =
        static_cast<std::size_t>(optional_uint(cfg, "eval_contexts", 512, what));
    if (eval_contexts == 0) fail(what + ": eval_contexts must be positive");

    RunDir run(args.out, "train", io::fnv1a_hex(io::read_text(args.config)), args.seed);

    const std::vector<Context> eval_set =
        contexts_for(task, derive_seed(args.seed, kSaltEval), eval_contexts);
    const Model init = make_model(kind, task.d, task.C, tcfg.init_scale,
                                  derive_seed(args.seed, kSaltInit));
    const ContextSource source = make_task_source(task, derive_seed(args.seed, kSaltBatch));

    const bool extractable = softmax_family(kind);
    EvalExtra extra;
    if (extractable)
        extra = [](const Model& m) {
            const ExtractedConstants ec = extract_constants(m.w, m.d, m.C);
            return std::pair<double, double>(ec.c_sigma_eff, ec.c_eta_eff);
        };

    const TrainResult res = train(init, tcfg, eval_set, source, extra);

    write_trace_csv(run.emit("trace.csv"), res.trace, {.extract_columns = extractable});
    for (std::size_t i = 0; i < res.trace.size(); ++i)
        io::save_checkpoint(run.emit(checkpoint_name(res.trace[i].step)),
                            io::checkpoint_of(res.checkpoints[i], res.trace[i].step, args.seed));
    io::save_checkpoint(run.emit("checkpoint_final.json"),
                        io::checkpoint_of(res.model, res.last_step, args.seed));

    const EvalStats final_stats = evaluate(res.model, eval_set);
    std::cout << "train: kind=" << kind_name(kind) << " steps=" << res.last_step
              << " eval_loss=" << io::format_double(final_stats.loss)
              << " eval_accuracy=" << io::format_double(final_stats.accuracy)
              << " checkpoints=" << res.checkpoints.size() << "\n";
    if (res.diverged)
        std::cout << "train: diverged after step " << res.last_step
                  << "; last good checkpoint saved\n";
    run.finish();
    return res.diverged ? 3 : 0;
}

// ----------------------------------------------------------------- cmd: align

int cmd_align(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "align");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "checkpoints", "task", "baseline",
                         "alignment_contexts", "scatter_contexts", "fit_contexts"},
                   what);
    const TaskConfig task = parse_task(io::require(cfg, "task", what), what + ": task");
    const std::size_t n_align =
        static_cast<std::size_t>(optional_uint(cfg, "alignment_contexts", 100, what));
    const std::size_t n_scatter =
        static_cast<std::size_t>(optional_uint(cfg, "scatter_contexts", 512, what));
    const std::size_t n_fit =
        static_cast<std::size_t>(optional_uint(cfg, "fit_contexts", 512, what));
    if (n_align == 0 || n_scatter == 0 || n_fit == 0)
        fail(what + ": context counts must be positive");

    const std::vector<io::Checkpoint> ckpts =
        collect_checkpoints(io::require_string(cfg, "checkpoints", what));
    for (const io::Checkpoint& c : ckpts) require_shape(c, task, what);

    RunDir run(args.out, "align", io::fnv1a_hex(io::read_text(args.config)), args.seed);

    const std::vector<Context> align_set =
        contexts_for(task, derive_seed(args.seed, kSaltAlign), n_align);
    const std::vector<Context> scatter_set =
        contexts_for(task, derive_seed(args.seed, kSaltScatter), n_scatter);
    const std::vector<Context> fit_set =
        contexts_for(task, derive_seed(args.seed, kSaltFit), n_fit);

    // exactness against an unmasked softmax checkpoint needs the self term
    const bool default_self = softmax_family(ckpts.back().kind);
    const ResolvedBaseline base = resolve_baseline(io::require(cfg, "baseline", what), fit_set,
                                                   default_self, what + ": baseline");

    io::CsvWriter trace({"step", "preds_diff", "cos_sim", "model_diff"});
    std::size_t total_excluded = 0;
    AlignmentReport last{};
    for (const io::Checkpoint& c : ckpts) {
        const AlignmentReport rep =
            alignment(predictor_of(c.to_model()), base.pred, align_set);
        total_excluded += rep.n_excluded;
        last = rep;
        trace.add_row({io::format_uint(c.step), io::format_double(rep.preds_diff),
                       io::format_double(rep.cos_sim), io::format_double(rep.model_diff)});
    }
    trace.write(run.emit("alignment.csv"));

    const Predictor model_pred = predictor_of(ckpts.back().to_model());
    const std::vector<PerContextMetrics> base_rows = per_context(base.pred, scatter_set);
    const std::vector<PerContextMetrics> model_rows = per_context(model_pred, scatter_set);
    io::CsvWriter scatter({"metric_a", "metric_b"});  // a = baseline, b = model
    for (std::size_t i = 0; i < scatter_set.size(); ++i)
        scatter.add_row({io::format_double(base_rows[i].loss),
                         io::format_double(model_rows[i].loss)});
    scatter.write(run.emit("scatter_loss.csv"));

    io::write_json_file(run.emit("baseline.json"), base.info, 2);

    std::cout << "align: baseline=" << base.type << " checkpoints=" << ckpts.size()
              << " final preds_diff=" << io::format_double(last.preds_diff)
              << " cos_sim=" << io::format_double(last.cos_sim)
              << " model_diff=" << io::format_double(last.model_diff) << "\n";
    if (total_excluded > 0)
        std::cout << "align: excluded " << total_excluded
                  << " numerically unstable context evaluations\n";
    run.finish();
    return 0;
}

// ------------------------------------------------------------ cmd: gridsearch

int cmd_gridsearch(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "gridsearch");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "task", "baseline", "fit_contexts"}, what);
    const TaskConfig task = parse_task(io::require(cfg, "task", what), what + ": task");
    const std::size_t n_fit =
        static_cast<std::size_t>(optional_uint(cfg, "fit_contexts", 1024, what));
    if (n_fit == 0) fail(what + ": fit_contexts must be positive");
    const Json& bj = io::require(cfg, "baseline", what);
    const std::string bwhat = what + ": baseline";
    const std::string type = io::require_string(bj, "type", bwhat);

    RunDir run(args.out, "gridsearch", io::fnv1a_hex(io::read_text(args.config)), args.seed);
    const std::vector<Context> fit_set =
        contexts_for(task, derive_seed(args.seed, kSaltFit), n_fit);

    Json best = Json::object();
    best["type"] = type;

    if (type == "gd_step") {
        io::check_keys(bj, {"type", "eta_grid"}, bwhat);
        const GdFit f = fit_gd_step(fit_set, parse_axis(io::require(bj, "eta_grid", bwhat), bwhat));
        io::CsvWriter csv({"eta", "loss"});
        for (const GdFitPoint& p : f.surface) csv.add_row({p.eta, p.loss});
        csv.write(run.emit("surface.csv"));
        best["eta"] = f.eta;
        best["loss"] = f.loss;
        std::cout << "gridsearch: gd_step eta=" << io::format_double(f.eta)
                  << " loss=" << io::format_double(f.loss) << "\n";
    } else if (type == "kernel_gd") {
        io::check_keys(bj, {"type", "eta_grid", "sigma2_grid"}, bwhat);
        const KernelFit f =
            fit_kernel_gd(fit_set, parse_axis(io::require(bj, "eta_grid", bwhat), bwhat),
                          parse_axis(io::require(bj, "sigma2_grid", bwhat), bwhat));
        io::CsvWriter csv({"eta", "sigma2", "loss"});
        for (const KernelFitPoint& p : f.surface) csv.add_row({p.eta, p.sigma2, p.loss});
        csv.write(run.emit("surface.csv"));
        best["eta"] = f.eta;
        best["sigma2"] = f.sigma2;
        best["loss"] = f.loss;
        std::cout << "gridsearch: kernel_gd eta=" << io::format_double(f.eta)
                  << " sigma2=" << io::format_double(f.sigma2)
                  << " loss=" << io::format_double(f.loss) << "\n";
    } else if (type == "adaptive") {
        io::check_keys(bj, {"type", "c_sigma_grid", "c_eta_grid", "include_self"}, bwhat);
        const bool include_self = optional_bool(bj, "include_self", false, bwhat);
        const AdaptiveFit f =
            fit_adaptive(fit_set, parse_axis(io::require(bj, "c_sigma_grid", bwhat), bwhat),
                         parse_axis(io::require(bj, "c_eta_grid", bwhat), bwhat), include_self);
        io::CsvWriter csv({"c_sigma", "c_eta", "loss"});
        for (const AdaptiveFitPoint& p : f.surface) csv.add_row({p.c_sigma, p.c_eta, p.loss});
        csv.write(run.emit("surface.csv"));
        best["c_sigma"] = f.c_sigma;
        best["c_eta"] = f.c_eta;
        best["include_self"] = include_self;
        best["loss"] = f.loss;
        std::cout << "gridsearch: adaptive c_sigma=" << io::format_double(f.c_sigma)
                  << " c_eta=" << io::format_double(f.c_eta)
                  << " loss=" << io::format_double(f.loss) << "\n";
    } else if (type == "variability") {
        io::check_keys(bj, {"type", "sigma2_grid"}, bwhat);
        const GridAxis axis = parse_axis(io::require(bj, "sigma2_grid", bwhat), bwhat);
        const std::vector<VariabilityRow> rows = adaptive_variability(fit_set, axis.points());
        io::CsvWriter csv({"sigma2", "ratio"});
        for (const VariabilityRow& r : rows) csv.add_row({r.sigma2, r.ratio});
        csv.write(run.emit("variability.csv"));
        best["sigma2_min"] = rows.front().sigma2;
        best["ratio_at_min"] = rows.front().ratio;
        best["sigma2_max"] = rows.back().sigma2;
        best["ratio_at_max"] = rows.back().ratio;
        std::cout << "gridsearch: variability ratio "
                  << io::format_double(rows.front().ratio) << " at sigma2="
                  << io::format_double(rows.front().sigma2) << " down to "
                  << io::format_double(rows.back().ratio) << " at sigma2="
                  << io::format_double(rows.back().sigma2) << "\n";
    } else {
        fail(bwhat + ": unknown type \"" + type + "\"");
    }

    io::write_json_file(run.emit("best.json"), best, 2);
    run.finish();
    return 0;
}

// --------------------------------------------------------------- cmd: extract

int cmd_extract(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "extract");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "checkpoint"}, what);
    const io::Checkpoint ckpt = io::load_checkpoint(io::require_string(cfg, "checkpoint", what));

    RunDir run(args.out, "extract", io::fnv1a_hex(io::read_text(args.config)), args.seed);

    const ExtractedConstants ec = extract_constants(ckpt.w, ckpt.d, ckpt.C);
    const Strategy strat = classify_strategy(ckpt.w, ckpt.d, ckpt.C);

    io::CsvWriter csv({"c_sigma_eff", "c_eta_eff", "residual"});
    csv.add_row({ec.c_sigma_eff, ec.c_eta_eff, ec.residual});
    csv.write(run.emit("extracted.csv"));

    Json j = Json::object();
    j["kind"] = io::kind_to_json(ckpt.kind);
    j["step"] = ckpt.step;
    j["c_sigma_eff"] = ec.c_sigma_eff;
    j["c_eta_eff"] = ec.c_eta_eff;
    j["residual"] = ec.residual;
    j["strategy"] = strategy_name(strat);
    io::write_json_file(run.emit("extracted.json"), j, 2);

    std::cout << "extract: c_sigma_eff=" << io::format_double(ec.c_sigma_eff)
              << " c_eta_eff=" << io::format_double(ec.c_eta_eff)
              << " residual=" << io::format_double(ec.residual)
              << " strategy=" << strategy_name(strat) << "\n";
    run.finish();
    return 0;
}

// --------------------------------------------------------------- cmd: compare

int cmd_compare(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "compare");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "task", "lengths", "eval_contexts",
                         "fit_contexts", "artifacts", "grids", "include_self"},
                   what);

    const Json& tj = io::require(cfg, "task", what);
    io::check_keys(tj, {"d", "C"}, what + ": task");
    const std::size_t d = static_cast<std::size_t>(io::require_uint(tj, "d", what + ": task"));
    const std::size_t C = static_cast<std::size_t>(io::require_uint(tj, "C", what + ": task"));

    std::vector<std::size_t> lengths = {10, 20, 50, 100};
    if (cfg.contains("lengths")) {
        const Json& lj = cfg.at("lengths");
        if (!lj.is_array() || lj.empty()) fail(what + ": \"lengths\" must be a non-empty array");
        lengths.clear();
        for (const Json& v : lj) {
            if (!v.is_number_unsigned()) fail(what + ": lengths must be positive integers");
            lengths.push_back(static_cast<std::size_t>(v.get<std::uint64_t>()));
        }
    }
    const std::size_t n_eval =
        static_cast<std::size_t>(optional_uint(cfg, "eval_contexts", 512, what));
    const std::size_t n_fit =
        static_cast<std::size_t>(optional_uint(cfg, "fit_contexts", 1024, what));
    const bool include_self = optional_bool(cfg, "include_self", false, what);

    const Json& aj = io::require(cfg, "artifacts", what);
    const std::string awhat = what + ": artifacts";
    io::check_keys(aj, {"linear", "frozen_softmax", "softmax"}, awhat);
    const io::Checkpoint linear_ckpt =
        io::load_checkpoint(io::require_string(aj, "linear", awhat));
    const io::Checkpoint frozen_ckpt =
        io::load_checkpoint(io::require_string(aj, "frozen_softmax", awhat));
    const io::Checkpoint softmax_ckpt =
        io::load_checkpoint(io::require_string(aj, "softmax", awhat));
    if (linear_ckpt.kind.tag != ModelTag::linear)
        fail(awhat + ": \"linear\" checkpoint is of kind " + kind_name(linear_ckpt.kind));
    if (frozen_ckpt.kind.tag != ModelTag::softmax_frozen_qk)
        fail(awhat + ": \"frozen_softmax\" checkpoint is of kind " +
             kind_name(frozen_ckpt.kind));
    if (softmax_ckpt.kind.tag != ModelTag::softmax)
        fail(awhat + ": \"softmax\" checkpoint is of kind " + kind_name(softmax_ckpt.kind));

    const Json& gj = io::require(cfg, "grids", what);
    const std::string gwhat = what + ": grids";
    io::check_keys(gj, {"eta", "kernel_eta", "kernel_sigma2", "c_sigma", "c_eta"}, gwhat);
    const GridAxis ax_eta = parse_axis(io::require(gj, "eta", gwhat), gwhat + ": eta");
    const GridAxis ax_keta =
        parse_axis(io::require(gj, "kernel_eta", gwhat), gwhat + ": kernel_eta");
    const GridAxis ax_ks2 =
        parse_axis(io::require(gj, "kernel_sigma2", gwhat), gwhat + ": kernel_sigma2");
    const GridAxis ax_cs = parse_axis(io::require(gj, "c_sigma", gwhat), gwhat + ": c_sigma");
    const GridAxis ax_ce = parse_axis(io::require(gj, "c_eta", gwhat), gwhat + ": c_eta");

    RunDir run(args.out, "compare", io::fnv1a_hex(io::read_text(args.config)), args.seed);

    io::CsvWriter csv({"model", "n", "loss", "accuracy"});
    for (const std::size_t n : lengths) {
        TaskConfig task;
        task.d = d;
        task.C = C;
        task.n = n;
        task.validate();
        require_shape(linear_ckpt, task, awhat);
        require_shape(frozen_ckpt, task, awhat);
        require_shape(softmax_ckpt, task, awhat);

        const std::vector<Context> eval_set =
            contexts_for(task, derive_seed(args.seed, kSaltCompareEval, n), n_eval);
        const std::vector<Context> fit_set =
            contexts_for(task, derive_seed(args.seed, kSaltCompareFit, n), n_fit);

        const GdFit gd = fit_gd_step(fit_set, ax_eta);
        const KernelFit kern = fit_kernel_gd(fit_set, ax_keta, ax_ks2);
        const AdaptiveFit adap = fit_adaptive(fit_set, ax_cs, ax_ce, include_self);

        const std::vector<std::pair<std::string, Predictor>> models = {
            {"gd_step_fit", gd_predictor(gd.eta)},
            {"kernel_gd_fit", kernel_predictor(kern.eta, kern.sigma2)},
            {"adaptive_fit", adaptive_predictor(adap.c_sigma, adap.c_eta, include_self)},
            {"linear_sa", predictor_of(linear_ckpt.to_model())},
            {"frozen_softmax_sa", predictor_of(frozen_ckpt.to_model())},
            {"softmax_sa", predictor_of(softmax_ckpt.to_model())},
        };
        for (const auto& [name, pred] : models) {
            const PredictorStats stats = evaluate_predictor(pred, eval_set);
            csv.add_row({name, io::format_uint(n), io::format_double(stats.loss),
                         io::format_double(stats.accuracy)});
        }
    }
    csv.write(run.emit("compare.csv"));
    std::cout << "compare: " << lengths.size() << " context length(s), 6 models -> compare.csv\n";
    run.finish();
    return 0;
}

// ------------------------------------------------------------ cmd: transience

int cmd_transience(const CommonArgs& args) {
    const Json cfg = load_config(args.config, "transience");
    const std::string what = args.config.string();
    io::check_keys(cfg, {"version", "command", "task", "m", "train", "eval_contexts"}, what);
    const TaskConfig task = parse_task(io::require(cfg, "task", what), what + ": task");
    const std::size_t m = static_cast<std::size_t>(io::require_uint(cfg, "m", what));
    TransienceConfig tc;
    tc.base = task;
    tc.m = m;
    tc.validate();
    const TrainConfig tcfg =
        parse_train(io::require(cfg, "train", what), args.seed, what + ": train");
    if (tcfg.batch_size % m != 0) fail(what + ": batch_size must be a multiple of m");
    const std::size_t eval_contexts =
        static_cast<std::size_t>(optional_uint(cfg, "eval_contexts", 256, what));
    if (eval_contexts == 0 || eval_contexts % m != 0)
        fail(what + ": eval_contexts must be a positive multiple of m");

    RunDir run(args.out, "transience", io::fnv1a_hex(io::read_text(args.config)), args.seed);

    Rng class_rng(derive_seed(args.seed, kSaltClasses));
    const std::vector<Matrix> fixed_sets = draw_class_sets(task, m, class_rng);

    const std::uint64_t batch_seed = derive_seed(args.seed, kSaltBatch);
    const ContextSource source = [tc, fixed_sets, batch_seed](std::size_t step,
                                                              std::size_t count) {
        Rng r(derive_seed(batch_seed, step));
        return generate_transience_batch(tc, fixed_sets, r, count);
    };

    const std::vector<Context> icl_eval =
        contexts_for(task, derive_seed(args.seed, kSaltEval), eval_contexts);
    Rng iwl_rng(derive_seed(args.seed, kSaltIwl));
    const std::vector<Context> iwl_eval =
        generate_transience_batch(tc, fixed_sets, iwl_rng, eval_contexts);

    const Model init = make_model(ModelKind::softmax(), task.d, task.C, tcfg.init_scale,
                                  derive_seed(args.seed, kSaltInit), /*with_mlp=*/true);

    const EvalExtra iwl_extra = [&iwl_eval](const Model& model) {
        const EvalStats s = evaluate(model, iwl_eval);
        return std::pair<double, double>(s.loss, s.accuracy);
    };

    const TrainResult res = train(init, tcfg, icl_eval, source, iwl_extra);

    io::CsvWriter icl({"step", "eval_loss", "eval_accuracy", "wall_ms"});
    io::CsvWriter iwl({"step", "eval_loss", "eval_accuracy"});
    for (const EvalRow& row : res.trace) {
        icl.add_row({io::format_uint(row.step), io::format_double(row.eval_loss),
                     io::format_double(row.eval_accuracy), io::format_double(row.wall_ms)});
        // the extra slots carry the ICL+IWL evaluation
        iwl.add_row({io::format_uint(row.step), io::format_double(row.c_sigma_eff),
                     io::format_double(row.c_eta_eff)});
    }
    icl.write(run.emit("icl_trace.csv"));
    iwl.write(run.emit("iwl_trace.csv"));
    io::save_checkpoint(run.emit("checkpoint_final.json"),
                        io::checkpoint_of(res.model, res.last_step, args.seed));

    const EvalStats icl_final = evaluate(res.model, icl_eval);
    const EvalStats iwl_final = evaluate(res.model, iwl_eval);
    std::cout << "transience: m=" << m << " steps=" << res.last_step
              << " icl_accuracy=" << io::format_double(icl_final.accuracy)
              << " iwl_accuracy=" << io::format_double(iwl_final.accuracy) << "\n";
    if (res.diverged)
        std::cout << "transience: diverged after step " << res.last_step << "\n";
    run.finish();
    return res.diverged ? 3 : 0;
}

// ------------------------------------------------------------------ cmd: plot

struct PlotFlags {
    bool scatter = false;
    bool log_x = false;
    bool log_y = false;
};

int cmd_plot(const std::vector<std::string>& files, const PlotFlags& flags,
             const CommonArgs& args) {
    if (files.empty()) fail("plot: no input files");
    std::string all_bytes;
    for (const std::string& f : files) all_bytes += io::read_text(f);

    RunDir run(args.out, "plot", io::fnv1a_hex(all_bytes), args.seed);

    for (const std::string& f : files) {
        const io::CsvTable table = io::read_csv(f);
        if (table.rows.empty()) fail(f + ": no data rows to plot");
        const std::string stem = fs::path(f).stem().string();

        const bool scatter =
            flags.scatter || (table.header.size() == 2 && table.header[0] == "metric_a" &&
                              table.header[1] == "metric_b");

        svg::PlotSpec spec;
        spec.title = stem;
        spec.log_x = flags.log_x;
        spec.log_y = flags.log_y;
        std::string text;
        if (scatter) {
            if (table.header.size() < 2) fail(f + ": scatter plot needs at least two columns");
            svg::Series s;
            for (const std::vector<double>& row : table.rows) {
                s.x.push_back(row[0]);
                s.y.push_back(row[1]);
            }
            spec.x_label = table.header[0];
            spec.y_label = table.header[1];
            spec.y_equals_x = true;
            text = svg::scatter_plot({s}, spec);
        } else {
            std::vector<svg::Series> series;
            for (std::size_t j = 1; j < table.header.size(); ++j) {
                if (table.header[j] == "wall_ms") continue;  // timing column is not a curve
                svg::Series s;
                s.label = table.header[j];
                for (const std::vector<double>& row : table.rows) {
                    s.x.push_back(row[0]);
                    s.y.push_back(row[j]);
                }
                series.push_back(std::move(s));
            }
            if (series.empty()) fail(f + ": no plottable columns");
            spec.x_label = table.header[0];
            if (series.size() == 1) spec.y_label = series[0].label;
            text = svg::line_plot(series, spec);
        }
        io::write_text_atomic(run.emit(stem + ".svg"), text);
    }
    std::cout << "plot: rendered " << files.size() << " file(s) into " << run.dir().string()
              << "\n";
    run.finish();
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------- main

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"iclab: numerical laboratory for in-context learners"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    std::vector<std::string> plot_files;
    PlotFlags plot_flags;

    const auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config)
            sub->add_option("--config", config_path, "experiment config (JSON)")
                ->required()
                ->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "run seed (default 0)");
        sub->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* sub_gen = app.add_subcommand("gen", "generate task datasets");
    CLI::App* sub_train = app.add_subcommand("train", "train an attention model");
    CLI::App* sub_align = app.add_subcommand("align", "compare checkpoints to a closed form");
    CLI::App* sub_grid = app.add_subcommand("gridsearch", "fit closed-form parameters");
    CLI::App* sub_extract = app.add_subcommand("extract", "read constants out of a checkpoint");
    CLI::App* sub_compare = app.add_subcommand("compare", "model comparison over context length");
    CLI::App* sub_trans = app.add_subcommand("transience", "attention+MLP memorization study");
    CLI::App* sub_plot = app.add_subcommand("plot", "render CSV artifacts as SVG");
    for (CLI::App* sub : {sub_gen, sub_train, sub_align, sub_grid, sub_extract, sub_compare,
                          sub_trans})
        add_common(sub, true);
    add_common(sub_plot, false);
    sub_plot->add_option("files", plot_files, "CSV files to render")
        ->required()
        ->check(CLI::ExistingFile);
    sub_plot->add_flag("--scatter", plot_flags.scatter, "force scatter rendering");
    sub_plot->add_flag("--logx", plot_flags.log_x, "log-scale x axis");
    sub_plot->add_flag("--logy", plot_flags.log_y, "log-scale y axis");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CommonArgs args{config_path, out_dir, seed};
    try {
        if (sub_gen->parsed()) return cmd_gen(args);
        if (sub_train->parsed()) return cmd_train(args);
        if (sub_align->parsed()) return cmd_align(args);
        if (sub_grid->parsed()) return cmd_gridsearch(args);
        if (sub_extract->parsed()) return cmd_extract(args);
        if (sub_compare->parsed()) return cmd_compare(args);
        if (sub_trans->parsed()) return cmd_transience(args);
        if (sub_plot->parsed()) return cmd_plot(plot_files, plot_flags, args);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace iclab::harness
