#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stormcast/nd/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the result's
// computation record when any input requires a gradient; otherwise the result
// is a plain constant. Shape violations throw ShapeError naming the op and
// the offending shapes.

namespace stormcast::nd {

// Elementwise binary ops with right-aligned (numpy-style) broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// x * sigmoid(x)
Tensor swish(const Tensor& a);
Tensor tanh(const Tensor& a);

/// [m,k]x[k,n], [B,m,k]x[k,n] or [B,m,k]x[B,k,n]. With transpose_b the
/// second operand is given as [n,k] / [B,n,k].
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// x[..., in] * w[in, out] + b[out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open [begin, end) along axis.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Reduction to a one-element tensor.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);

/// Softmax over the last axis.
Tensor softmax(const Tensor& a);
/// Normalizes over the last axis, then scales by gamma and shifts by beta (both [C]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// "Same"-padded stride-1 convolution. x [C_in,H,W], w [C_out,C_in,kh,kw],
/// bias [C_out] or undefined. Any kernel height/width is accepted.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Rows of table [N,d] selected by ids -> [len(ids), d]; gradients scatter-add.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Mean over non-overlapping groups of `factor` along the last axis.
Tensor avg_pool_last(const Tensor& a, std::size_t factor);
/// Each element repeated `factor` times along the last axis.
Tensor repeat_last(const Tensor& a, std::size_t factor);

}  // namespace stormcast::nd
