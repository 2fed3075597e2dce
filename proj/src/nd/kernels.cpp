#include "stormcast/nd/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace stormcast::nd::kernels {

namespace {

inline double a_at(const GemmShape& s, std::span<const double> a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}
inline double b_at(const GemmShape& s, std::span<const double> b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

// Valid output range [lo, hi) along one axis for kernel tap `tap`, so that
// the input index o + tap - pad stays inside [0, extent).
inline void tap_range(std::size_t extent, std::size_t tap, std::size_t pad, std::size_t& lo, std::size_t& hi) {
  const auto shift = static_cast<std::ptrdiff_t>(tap) - static_cast<std::ptrdiff_t>(pad);
  const auto n = static_cast<std::ptrdiff_t>(extent);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
  hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(n, n - shift));
  if (hi < lo) hi = lo;
}

}  // namespace

// ---------------------------------------------------------------------------
// reference

namespace reference {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a_at(s, a, i, p) * b_at(s, b, p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + acc : acc;
    }
  }
}

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
  const auto pt = static_cast<std::ptrdiff_t>(s.pad_top()), pl = static_cast<std::ptrdiff_t>(s.pad_left());
  for (std::size_t co = 0; co < s.out_ch; ++co) {
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < s.in_ch; ++ci) {
          for (std::size_t ky = 0; ky < s.kh; ++ky) {
            for (std::size_t kx = 0; kx < s.kw; ++kx) {
              const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pt;
              const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += weight[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx] *
                     input[(ci * s.height + static_cast<std::size_t>(iy)) * s.width + static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(co * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)] = acc;
      }
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
  const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
  const auto pt = static_cast<std::ptrdiff_t>(s.pad_top()), pl = static_cast<std::ptrdiff_t>(s.pad_left());
  for (std::size_t co = 0; co < s.out_ch; ++co)
    for (std::ptrdiff_t y = 0; y < H; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        const double g = grad_out[(co * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)];
        for (std::size_t ci = 0; ci < s.in_ch; ++ci)
          for (std::size_t ky = 0; ky < s.kh; ++ky)
            for (std::size_t kx = 0; kx < s.kw; ++kx) {
              const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pt;
              const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              grad_in[(ci * s.height + static_cast<std::size_t>(iy)) * s.width + static_cast<std::size_t>(ix)] +=
                  g * weight[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx];
            }
      }
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> grad_out, std::span<const double> input,
                            std::span<double> grad_w) {
  const auto H = static_cast<std::ptrdiff_t>(s.height), W = static_cast<std::ptrdiff_t>(s.width);
  const auto pt = static_cast<std::ptrdiff_t>(s.pad_top()), pl = static_cast<std::ptrdiff_t>(s.pad_left());
  for (std::size_t co = 0; co < s.out_ch; ++co)
    for (std::ptrdiff_t y = 0; y < H; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        const double g = grad_out[(co * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)];
        for (std::size_t ci = 0; ci < s.in_ch; ++ci)
          for (std::size_t ky = 0; ky < s.kh; ++ky)
            for (std::size_t kx = 0; kx < s.kw; ++kx) {
              const std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pt;
              const std::ptrdiff_t ix = x + static_cast<std::ptrdiff_t>(kx) - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              grad_w[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx] +=
                  g * input[(ci * s.height + static_cast<std::size_t>(iy)) * s.width + static_cast<std::size_t>(ix)];
            }
      }
}

}  // namespace reference

// ---------------------------------------------------------------------------
// parallel

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  const auto M = static_cast<std::int64_t>(s.m);
  const std::size_t N = s.n, K = s.k;
  const bool big = s.m * s.n * s.k > 32768;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t ii = 0; ii < M; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * N;
    if (!accumulate) std::fill(crow, crow + N, 0.0);
    if (s.trans_b) {
      for (std::size_t j = 0; j < N; ++j) {
        const double* brow = b.data() + j * K;
        double acc = 0.0;
        if (s.trans_a) {
          for (std::size_t p = 0; p < K; ++p) acc += a[p * s.m + i] * brow[p];
        } else {
          const double* arow = a.data() + i * K;
          for (std::size_t p = 0; p < K; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    } else {
      for (std::size_t p = 0; p < K; ++p) {
        const double av = s.trans_a ? a[p * s.m + i] : a[i * K + p];
        if (av == 0.0) continue;
        const double* brow = b.data() + p * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t HW = s.height * s.width;
  const auto CO = static_cast<std::int64_t>(s.out_ch);
  const bool big = s.out_ch * s.in_ch * HW * s.kh * s.kw > 32768;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t cc = 0; cc < CO; ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    double* o = out.data() + co * HW;
    std::fill(o, o + HW, bias.empty() ? 0.0 : bias[co]);
    for (std::size_t ci = 0; ci < s.in_ch; ++ci) {
      const double* in = input.data() + ci * HW;
      for (std::size_t ky = 0; ky < s.kh; ++ky) {
        std::size_t ylo, yhi;
        tap_range(s.height, ky, s.pad_top(), ylo, yhi);
        for (std::size_t kx = 0; kx < s.kw; ++kx) {
          const double w = weight[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx];
          if (w == 0.0) continue;
          std::size_t xlo, xhi;
          tap_range(s.width, kx, s.pad_left(), xlo, xhi);
          for (std::size_t y = ylo; y < yhi; ++y) {
            double* orow = o + y * s.width;
            const double* irow = in + (y + ky - s.pad_top()) * s.width + kx - s.pad_left();
            for (std::size_t x = xlo; x < xhi; ++x) orow[x] += w * irow[x];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
  const std::size_t HW = s.height * s.width;
  const auto CI = static_cast<std::int64_t>(s.in_ch);
  const bool big = s.out_ch * s.in_ch * HW * s.kh * s.kw > 32768;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t cc = 0; cc < CI; ++cc) {
    const auto ci = static_cast<std::size_t>(cc);
    double* gi = grad_in.data() + ci * HW;
    for (std::size_t co = 0; co < s.out_ch; ++co) {
      const double* go = grad_out.data() + co * HW;
      for (std::size_t ky = 0; ky < s.kh; ++ky) {
        std::size_t ylo, yhi;
        tap_range(s.height, ky, s.pad_top(), ylo, yhi);
        for (std::size_t kx = 0; kx < s.kw; ++kx) {
          const double w = weight[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx];
          if (w == 0.0) continue;
          std::size_t xlo, xhi;
          tap_range(s.width, kx, s.pad_left(), xlo, xhi);
          for (std::size_t y = ylo; y < yhi; ++y) {
            const double* grow = go + y * s.width;
            double* irow = gi + (y + ky - s.pad_top()) * s.width + kx - s.pad_left();
            for (std::size_t x = xlo; x < xhi; ++x) irow[x] += w * grow[x];
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> grad_out, std::span<const double> input,
                            std::span<double> grad_w) {
  const std::size_t HW = s.height * s.width;
  const auto CO = static_cast<std::int64_t>(s.out_ch);
  const bool big = s.out_ch * s.in_ch * HW * s.kh * s.kw > 32768;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t cc = 0; cc < CO; ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    const double* go = grad_out.data() + co * HW;
    for (std::size_t ci = 0; ci < s.in_ch; ++ci) {
      const double* in = input.data() + ci * HW;
      for (std::size_t ky = 0; ky < s.kh; ++ky) {
        std::size_t ylo, yhi;
        tap_range(s.height, ky, s.pad_top(), ylo, yhi);
        for (std::size_t kx = 0; kx < s.kw; ++kx) {
          std::size_t xlo, xhi;
          tap_range(s.width, kx, s.pad_left(), xlo, xhi);
          double acc = 0.0;
          for (std::size_t y = ylo; y < yhi; ++y) {
            const double* grow = go + y * s.width;
            const double* irow = in + (y + ky - s.pad_top()) * s.width + kx - s.pad_left();
            for (std::size_t x = xlo; x < xhi; ++x) acc += grow[x] * irow[x];
          }
          grad_w[((co * s.in_ch + ci) * s.kh + ky) * s.kw + kx] += acc;
        }
      }
    }
  }
}

}  // namespace stormcast::nd::kernels
