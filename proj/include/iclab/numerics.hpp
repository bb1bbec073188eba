// Numerically careful scalar building blocks shared across predictors,
// training, and analysis.

#pragma once

#include <cstddef>
#include <vector>

namespace iclab {

// softmax with max-shift; throws NumericError on non-finite logits or empty
// input. Never returns NaN: the shifted exponentials sum to >= 1.
std::vector<double> stable_softmax(const std::vector<double>& logits);
void stable_softmax_inplace(double* logits, std::size_t n);

// log(sum_i exp(x_i)) with the same shift
double logsumexp(const double* x, std::size_t n);

// -log p[label], computed from logits without materializing the softmax,
// so tiny probabilities don't round to zero first
double cross_entropy_from_logits(const std::vector<double>& logits, std::size_t label);

std::size_t argmax(const std::vector<double>& v);

}  // namespace iclab
