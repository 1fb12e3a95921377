#pragma once

#include <cstddef>
#include <vector>

#include "dwd/rng.hpp"
#include "dwd/tensor.hpp"

// Differentiable ops. Every op checks its shape rule and throws ShapeError
// naming the op on violation. Broadcasting follows numpy alignment rules.
namespace dwd::ad {

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                // rank 2

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log with the argument floored at `floor`.
Tensor log(const Tensor& a, double floor = 1e-12);
Tensor square(const Tensor& a);

/// Softmax / log-softmax over the last axis.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);

/// Rows of `table` (rank >= 1) selected along axis 0; the embedding gather.
Tensor index_select(const Tensor& table, const std::vector<std::size_t>& rows);
/// out[i] = a[i, cols[i]] for rank-2 `a`.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& cols);

/// Inverted dropout: keep-mask drawn from `rng`, kept values scaled by
/// 1/(1-rate). Identity when !training or rate == 0.
Tensor dropout(const Tensor& a, double rate, RngStream& rng, bool training);

/// x[m,in] -> [m,out] with W[o,:] = magnitude[o] * direction[o,:] / |direction[o,:]|.
Tensor wn_linear(const Tensor& x, const Tensor& direction, const Tensor& magnitude,
                 const Tensor& bias);

/// x[m,in] * W[in,out] + b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace dwd::ad
