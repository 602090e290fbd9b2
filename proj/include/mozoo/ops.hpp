#pragma once

#include <memory>
#include <vector>

#include "mozoo/autograd.hpp"

// Differentiable kernels. Every function records its output in the graph that
// owns its operands; binary elementwise ops broadcast by trailing-dimension
// alignment.
namespace mozoo::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, float factor);
Var add_scalar(const Var& x, float value);

/// [..., m, k] x [..., k, n] -> [..., m, n] with broadcast batch dimensions.
Var matmul(const Var& a, const Var& b);

/// x[..., in] * w[in, out] (+ bias[out]).
Var linear(const Var& x, const Var& w, const Var& bias = Var());

Var silu(const Var& x);
Var square(const Var& x);
Var softmax_lastdim(const Var& x);

/// Normalizes each row of the last dimension, then applies gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps);
/// Same normalization without the affine part.
Var layer_norm(const Var& x, float eps);

Var sum(const Var& x);
Var mean(const Var& x);
/// mean((a - b)^2) over all elements.
Var mse(const Var& a, const Var& b);

Var reshape(const Var& x, Shape shape);
/// Concatenates along axis 0; trailing dimensions must agree.
Var concat_rows(const std::vector<Var>& parts);
/// Rows [begin, end) of axis 0.
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
/// Row `index` of a 2-D tensor, returned with shape [cols].
Var row(const Var& x, std::size_t index);
/// out.flat[i] = x.flat[index[i]], reshaped to `shape`.
Var gather(const Var& x, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape);

}  // namespace mozoo::ops

namespace mozoo::kernels {

/// Plain (non-recording) matmul on rank-2 tensors, used by the attention and
/// rotary modules.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor softmax_lastdim(const Tensor& x);

}  // namespace mozoo::kernels
