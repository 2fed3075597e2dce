#include "stormcast/nd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stormcast/core/errors.hpp"
#include "stormcast/nd/kernels.hpp"

namespace stormcast::nd {

namespace {

using Backward = std::function<void(Node&)>;

Tensor record(Shape shape, std::vector<double> value, const char* op, std::vector<Tensor> inputs, Backward bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool track = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    for (auto& t : inputs) {
      // undefined optional inputs keep their slot so closures can index by position
      node->inputs.push_back(t.defined() ? t.node() : std::make_shared<Node>());
    }
    node->backward = std::move(bw);
  }
  return Tensor::from_node(std::move(node));
}

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const std::string& why) {
  throw ShapeError(op + ": shape " + shape_string(a) + " " + why);
}

// Accumulation target for an input slot, or nullptr when it needs no gradient.
double* grad_of(Node& self, std::size_t slot) {
  Node& in = *self.inputs[slot];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Broadcast plan: output shape and per-operand strides aligned to it (0 on broadcast axes).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

Broadcast plan_broadcast(const std::string& op, const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  std::vector<std::size_t> da(r, 1), db(r, 1);
  std::copy(a.begin(), a.end(), da.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), db.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (da[i] != db[i] && da[i] != 1 && db[i] != 1) shape_fail(op, a, b);
    p.out[i] = std::max(da[i], db[i]);
  }
  auto sa = strides_of(da), sb = strides_of(db);
  p.sa.resize(r);
  p.sb.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    p.sa[i] = da[i] == 1 ? 0 : sa[i];
    p.sb[i] = db[i] == 1 ? 0 : sb[i];
  }
  return p;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Broadcast& p, Fn&& fn) {
  const std::size_t n = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.sa[d] * idx[d];
      ib -= p.sb[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const char* name, BinOp kind, const Tensor& a, const Tensor& b) {
  auto plan = plan_broadcast(name, a.shape(), b.shape());
  std::vector<double> out(numel(plan.out));
  const auto av = a.values(), bv = b.values();
  for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinOp::kAdd: out[i] = av[ia] + bv[ib]; break;
      case BinOp::kSub: out[i] = av[ia] - bv[ib]; break;
      case BinOp::kMul: out[i] = av[ia] * bv[ib]; break;
      case BinOp::kDiv: out[i] = av[ia] / bv[ib]; break;
    }
  });
  Shape shape = plan.out;
  return record(std::move(shape), std::move(out), name, {a, b}, [plan, kind](Node& self) {
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const auto& g = self.grad;
    for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinOp::kAdd:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
          break;
        case BinOp::kSub:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] -= g[i];
          break;
        case BinOp::kMul:
          if (ga) ga[ia] += g[i] * bv[ib];
          if (gb) gb[ib] += g[i] * av[ia];
          break;
        case BinOp::kDiv:
          if (ga) ga[ia] += g[i] / bv[ib];
          if (gb) gb[ib] -= g[i] * av[ia] / (bv[ib] * bv[ib]);
          break;
      }
    });
  });
}

// y = f(x); dy/dx expressed through (x, y).
template <typename F, typename D>
Tensor unary(const char* name, const Tensor& a, F f, D df) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return record(a.shape(), std::move(out), name, {a}, [df](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, extent, inner).
void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& extent, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinOp::kDiv, a, b); }

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor swish(const Tensor& a) {
  return unary(
      "swish", a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s + x * s * (1.0 - s);
      });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3 || (as.size() == 2 && bs.size() == 3)) {
    shape_fail("matmul", as, bs);
  }
  const std::size_t batch = as.size() == 3 ? as[0] : 1;
  const bool b_batched = bs.size() == 3;
  if (b_batched && bs[0] != batch) shape_fail("matmul", as, bs);
  const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
  const std::size_t b0 = bs[bs.size() - 2], b1 = bs[bs.size() - 1];
  const std::size_t bk = transpose_b ? b1 : b0;
  const std::size_t n = transpose_b ? b0 : b1;
  if (bk != k) shape_fail("matmul", as, bs);

  Shape out_shape = as.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
  std::vector<double> out(batch * m * n);
  const kernels::GemmShape g{m, n, k, false, transpose_b};
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(g, a.values().subspan(i * m * k, m * k),
                  b_batched ? b.values().subspan(i * k * n, k * n) : b.values(),
                  std::span<double>(out).subspan(i * m * n, m * n), false);
  }
  return record(std::move(out_shape), std::move(out), "matmul", {a, b},
                [batch, m, n, k, transpose_b, b_batched](Node& self) {
                  double* ga = grad_of(self, 0);
                  double* gb = grad_of(self, 1);
                  const auto& av = self.inputs[0]->value;
                  const auto& bv = self.inputs[1]->value;
                  const std::span<const double> gc(self.grad);
                  for (std::size_t i = 0; i < batch; ++i) {
                    auto gci = gc.subspan(i * m * n, m * n);
                    auto bi = b_batched ? std::span<const double>(bv).subspan(i * k * n, k * n)
                                        : std::span<const double>(bv);
                    auto ai = std::span<const double>(av).subspan(i * m * k, m * k);
                    if (ga) {
                      // dA = dC * op(B)^T
                      kernels::gemm({m, k, n, false, !transpose_b}, gci, bi, std::span<double>(ga + i * m * k, m * k),
                                    true);
                    }
                    if (gb) {
                      double* gbi = b_batched ? gb + i * k * n : gb;
                      if (!transpose_b) {
                        kernels::gemm({k, n, m, true, false}, ai, gci, std::span<double>(gbi, k * n), true);
                      } else {
                        kernels::gemm({n, k, m, true, false}, gci, ai, std::span<double>(gbi, k * n), true);
                      }
                    }
                  }
                });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape& xs = x.shape();
  if (w.rank() != 2 || xs.back() != w.dim(0)) shape_fail("linear", xs, w.shape());
  const std::size_t rows = x.size() / xs.back();
  Tensor flat = xs.size() == 2 ? x : reshape(x, {rows, xs.back()});
  Tensor y = matmul(flat, w);
  if (b.defined()) {
    if (b.rank() != 1 || b.dim(0) != w.dim(1)) shape_fail("linear", w.shape(), b.shape());
    y = add(y, b);
  }
  if (xs.size() == 2) return y;
  Shape out = xs;
  out.back() = w.dim(1);
  return reshape(y, out);
}

// ---------------------------------------------------------------------------
// layout

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) shape_fail("permute", s, "does not match axis list");
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) shape_fail("permute", s, "given an invalid axis permutation");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[axes[i]];
  const auto in_strides = strides_of(s);
  // source stride for each output axis
  std::vector<std::size_t> src(r);
  for (std::size_t i = 0; i < r; ++i) src[i] = in_strides[axes[i]];

  auto gather_index = [out_shape, src, r](std::vector<std::size_t>& map) {
    const std::size_t n = map.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      map[i] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += src[d];
        if (idx[d] < out_shape[d]) break;
        off -= src[d] * idx[d];
        idx[d] = 0;
      }
    }
  };
  auto map = std::make_shared<std::vector<std::size_t>>(a.size());
  gather_index(*map);
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[(*map)[i]];
  return record(std::move(out_shape), std::move(out), "permute", {a}, [map](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[(*map)[i]] += self.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_fail("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return record(std::move(shape), std::move(out), "reshape", {a}, [](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_fail("concat", first, "has no axis " + std::to_string(axis));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) shape_fail("concat", first, s);
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  std::size_t outer, extent, inner;
  split_axis(out_shape, axis, outer, extent, inner);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].values();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>(o * extent * inner + offset * inner));
    }
    offset += extents[p];
  }
  return record(std::move(out_shape), std::move(out), "concat", parts, [extents, outer, extent, inner](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t block = extents[p] * inner;
      if (double* gp = grad_of(self, p)) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * extent * inner + offset * inner;
          for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
        }
      }
      offset += extents[p];
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    shape_fail("slice", s, "cannot be sliced [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                               std::to_string(axis));
  }
  std::size_t outer, extent, inner;
  split_axis(s, axis, outer, extent, inner);
  const std::size_t len = end - begin;
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * extent + begin) * inner), len * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  }
  return record(std::move(out_shape), std::move(out), "slice", {a}, [outer, extent, inner, begin, len](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < len * inner; ++i) ga[(o * extent + begin) * inner + i] += self.grad[o * len * inner + i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  return record({1}, {total}, "sum", {a}, [](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) ga[i] += g;
  });
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  const Shape& s = a.shape();
  if (axis >= s.size()) shape_fail("sum", s, "has no axis " + std::to_string(axis));
  std::size_t outer, extent, inner;
  split_axis(s, axis, outer, extent, inner);
  Shape out_shape = s;
  if (keepdim || s.size() == 1) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(outer * inner, 0.0);
  const auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * extent + e) * inner + i];
  return record(std::move(out_shape), std::move(out), "sum_axis", {a}, [outer, extent, inner](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t e = 0; e < extent; ++e)
        for (std::size_t i = 0; i < inner; ++i) ga[(o * extent + e) * inner + i] += self.grad[o * inner + i];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto extent = static_cast<double>(a.shape().at(axis));
  return scale(sum(a, axis, keepdim), 1.0 / extent);
}

// ---------------------------------------------------------------------------
// normalization

Tensor softmax(const Tensor& a) {
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.size() / c;
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * c;
    double* y = out.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return record(a.shape(), std::move(out), "softmax", {a}, [rows, c](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* g = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = x.shape().back();
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    shape_fail("layer_norm", x.shape(), gamma.shape());
  }
  const std::size_t rows = x.size() / c;
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return record(x.shape(), std::move(out), "layer_norm", {x, gamma, beta}, [rows, c, xhat, rstd](Node& self) {
    double* gx = grad_of(self, 0);
    double* gg = grad_of(self, 1);
    double* gb = grad_of(self, 2);
    const auto& gamma_v = self.inputs[1]->value;
    const auto& g = self.grad;
    const double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* h = xhat->data() + r * c;
      const double* gr = g.data() + r * c;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (gg) gg[j] += gr[j] * h[j];
        if (gb) gb[j] += gr[j];
        const double dh = gr[j] * gamma_v[j];
        mean_dh += dh;
        mean_dh_h += dh * h[j];
      }
      if (!gx) continue;
      mean_dh *= inv_c;
      mean_dh_h *= inv_c;
      const double rs = (*rstd)[r];
      for (std::size_t j = 0; j < c; ++j) {
        const double dh = gr[j] * gamma_v[j];
        gx[r * c + j] += rs * (dh - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolution and friends

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0)) shape_fail("conv2d", x.shape(), w.shape());
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) shape_fail("conv2d", w.shape(), bias.shape());
  const kernels::ConvShape cs{x.dim(0), w.dim(0), x.dim(1), x.dim(2), w.dim(2), w.dim(3)};
  std::vector<double> out(cs.out_ch * cs.height * cs.width);
  kernels::conv2d_forward(cs, x.values(), w.values(), bias.defined() ? bias.values() : std::span<const double>{}, out);
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return record({cs.out_ch, cs.height, cs.width}, std::move(out), "conv2d", std::move(inputs), [cs, has_bias](Node& self) {
    const std::span<const double> g(self.grad);
    if (double* gx = grad_of(self, 0)) {
      kernels::conv2d_backward_input(cs, g, self.inputs[1]->value, std::span<double>(gx, self.inputs[0]->value.size()));
    }
    if (double* gw = grad_of(self, 1)) {
      kernels::conv2d_backward_weight(cs, g, self.inputs[0]->value, std::span<double>(gw, self.inputs[1]->value.size()));
    }
    if (has_bias) {
      if (double* gb = grad_of(self, 2)) {
        const std::size_t hw = cs.height * cs.width;
        for (std::size_t co = 0; co < cs.out_ch; ++co) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += g[co * hw + i];
          gb[co] += acc;
        }
      }
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) shape_fail("gather_rows", table.shape(), "is not a matrix");
  const std::size_t n = table.dim(0), d = table.dim(1);
  if (ids.empty()) shape_fail("gather_rows", table.shape(), "gathered with no ids");
  auto rows = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  std::vector<double> out(rows->size() * d);
  const auto tv = table.values();
  for (std::size_t r = 0; r < rows->size(); ++r) {
    if ((*rows)[r] >= n) {
      shape_fail("gather_rows", table.shape(), "indexed with out-of-range row " + std::to_string((*rows)[r]));
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>((*rows)[r] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return record({rows->size(), d}, std::move(out), "gather_rows", {table}, [rows, d](Node& self) {
    double* gt = grad_of(self, 0);
    if (!gt) return;
    for (std::size_t r = 0; r < rows->size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gt[(*rows)[r] * d + j] += self.grad[r * d + j];
  });
}

Tensor avg_pool_last(const Tensor& a, std::size_t factor) {
  const std::size_t len = a.shape().back();
  if (factor == 0 || len % factor != 0) shape_fail("avg_pool_last", a.shape(), "last axis not divisible by factor");
  const std::size_t rows = a.size() / len, out_len = len / factor;
  Shape out_shape = a.shape();
  out_shape.back() = out_len;
  std::vector<double> out(rows * out_len, 0.0);
  const auto av = a.values();
  const double inv = 1.0 / static_cast<double>(factor);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < len; ++i) out[r * out_len + i / factor] += av[r * len + i] * inv;
  return record(std::move(out_shape), std::move(out), "avg_pool_last", {a}, [rows, len, factor, inv](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const std::size_t out_len = len / factor;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < len; ++i) ga[r * len + i] += self.grad[r * out_len + i / factor] * inv;
  });
}

Tensor repeat_last(const Tensor& a, std::size_t factor) {
  if (factor == 0) shape_fail("repeat_last", a.shape(), "repeated zero times");
  const std::size_t len = a.shape().back();
  const std::size_t rows = a.size() / len, out_len = len * factor;
  Shape out_shape = a.shape();
  out_shape.back() = out_len;
  std::vector<double> out(rows * out_len);
  const auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < out_len; ++i) out[r * out_len + i] = av[r * len + i / factor];
  return record(std::move(out_shape), std::move(out), "repeat_last", {a}, [rows, len, factor](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const std::size_t out_len = len * factor;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < out_len; ++i) ga[r * len + i / factor] += self.grad[r * out_len + i];
  });
}

}  // namespace stormcast::nd
