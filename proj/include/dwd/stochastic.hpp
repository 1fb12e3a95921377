#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dwd/rng.hpp"
#include "dwd/tensor.hpp"

namespace dwd::stoch {

/// Concrete (Gumbel-Softmax) relaxation of K-way categoricals, one per row.
struct ConcreteSample {
  ad::Tensor soft;                      // [rows, K], differentiable w.r.t. logits
  std::vector<std::size_t> hard_index;  // argmax of each soft row, 0-based
  double temperature = 1.0;
};

/// Standard Gumbel noise with the same shape as `like`.
ad::Tensor gumbel_noise(const ad::Shape& shape, RngStream& rng);

/// soft = softmax((logits + noise) / temperature) over the last axis.
/// Accepts rank-1 [K] or rank-2 [rows, K] logits; K >= 2.
ConcreteSample gumbel_softmax(const ad::Tensor& logits, double temperature, RngStream& rng);

/// Same relaxation with caller-supplied noise (lets tests freeze it).
ConcreteSample gumbel_softmax_with_noise(const ad::Tensor& logits, const ad::Tensor& noise,
                                         double temperature);

/// KL(q || Uniform(K)) = sum_k q_k (log q_k + log K) for each row of
/// log-probabilities. Returns a scalar for rank-1 input, [rows] for rank-2.
/// Throws std::invalid_argument if a row's probabilities do not sum to 1
/// within 1e-6. Log terms are floored at log(1e-12).
ad::Tensor kl_categorical_uniform(const ad::Tensor& log_probs);

/// Draws an index distributed as `probs`. Throws on unnormalized input.
std::size_t sample_categorical(std::span<const double> probs, RngStream& rng);

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> v);

/// Linear temperature schedule from `start` to `end` over `steps` updates.
double annealed_temperature(double start, double end, std::size_t step, std::size_t steps);

}  // namespace dwd::stoch
