#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels behind the differentiable ops.
//
// Two implementations of every kernel:
//   kernels::reference::*  straightforward serial loops, kept as the test oracle
//   kernels::*             OpenMP-parallel, cache-friendly loop order
//
// The parallel versions split work so that every output element is written by
// exactly one thread with a fixed accumulation order, so results do not depend
// on the thread count.

namespace stormcast::nd::kernels {

/// C[M x N] (+)= op(A) * op(B), row-major. op(A) is M x K, op(B) is K x N.
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

/// "Same"-padded stride-1 2-D convolution of one [C_in x H x W] image.
/// Even kernels pad (k-1)/2 before and the rest after.
struct ConvShape {
  std::size_t in_ch = 0, out_ch = 0, height = 0, width = 0, kh = 1, kw = 1;
  std::size_t pad_top() const { return (kh - 1) / 2; }
  std::size_t pad_left() const { return (kw - 1) / 2; }
};

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);

/// out[co,y,x] = bias[co] + sum w[co,ci,ky,kx] * in[ci, y+ky-pt, x+kx-pl]. bias may be empty.
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
/// grad_in += d(out)/d(in)^T grad_out
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
/// grad_w += d(out)/d(w)^T grad_out
void conv2d_backward_weight(const ConvShape& s, std::span<const double> grad_out, std::span<const double> input,
                            std::span<double> grad_w);

namespace reference {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> grad_out, std::span<const double> input,
                            std::span<double> grad_w);
}  // namespace reference

}  // namespace stormcast::nd::kernels
