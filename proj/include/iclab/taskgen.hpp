// Synthetic task generation: classification contexts on the unit sphere,
// the dense/sparse query-placement datasets, and fixed-class-set batches for
// the transience study.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "iclab/matrix.hpp"
#include "iclab/rng.hpp"

namespace iclab {

struct TaskConfig {
    std::size_t d = 2;            // input dimension, >= 2
    std::size_t C = 2;            // class count, >= 2
    std::size_t n = 2;            // context length, divisible by C
    std::size_t max_reject = 100000;  // attempt cap per rejection-sampled point
    void validate() const;        // throws ValidationError
};

struct Context {
    Matrix class_vectors;              // C x d, unit rows
    Matrix xs;                         // n x d, unit rows
    std::vector<std::size_t> labels;   // n entries in [0, C), class-sorted
    std::vector<double> x_query;       // unit d-vector
    std::size_t y_query = 0;
};

struct Dataset {
    TaskConfig config;
    std::uint64_t seed = 0;
    std::vector<Context> contexts;
};

// Gaussian draw, normalized; resamples the measure-zero all-zero draw
std::vector<double> sample_unit_sphere(Rng& rng, std::size_t d);

// nearest class vector by dot product; ties go to the lowest index
std::size_t assign_class(const double* x, const Matrix& class_vectors);

Matrix sample_class_vectors(const TaskConfig& cfg, Rng& rng);

Context generate_context(const TaskConfig& cfg, Rng& rng);

// same sampling but labels assigned by a caller-supplied class-vector set
Context generate_context_for_classes(const TaskConfig& cfg, const Matrix& class_vectors,
                                     Rng& rng);

// count contexts, each from its own derived seed, so generation order (or a
// future parallel split) cannot change the output
Dataset generate_dataset(const TaskConfig& cfg, std::uint64_t seed, std::size_t count);

struct DenseSparseOptions {
    double mean_threshold = 0.3;  // keep contexts with ||mean(xs)|| >= this
    std::size_t K = 50;           // regular K-gon of candidate queries
    double near_threshold = 0.3;  // x_i counts as near when x_i . v > this
};

// candidate queries at the K-gon vertices; returns (dense, sparse) choices
std::pair<std::vector<double>, std::vector<double>> dense_sparse_queries(
    const Matrix& xs, const DenseSparseOptions& opt);

// samples `count` candidate contexts, keeps the ones passing the mean-norm
// filter, and emits two datasets that differ only in query placement
std::pair<Dataset, Dataset> generate_dense_sparse_pair(const TaskConfig& cfg,
                                                       std::uint64_t seed, std::size_t count,
                                                       const DenseSparseOptions& opt = {});

struct TransienceConfig {
    TaskConfig base;
    std::size_t m = 1;  // number of fixed class-vector sets
    void validate() const;
};

std::vector<Matrix> draw_class_sets(const TaskConfig& cfg, std::size_t m, Rng& rng);

// batch/m contexts per fixed set, fresh point samples each call
std::vector<Context> generate_transience_batch(const TransienceConfig& cfg,
                                               const std::vector<Matrix>& fixed_sets,
                                               Rng& rng, std::size_t batch);

}  // namespace iclab
