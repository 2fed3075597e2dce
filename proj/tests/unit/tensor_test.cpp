#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "gradcheck.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/nd/ops.hpp"
#include "stormcast/nd/random.hpp"

namespace stormcast::nd {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// sum(op_output * w) with a fixed random weighting, so every output element
// contributes a distinct gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

TEST(TensorTest, ConstructorRejectsMismatchedShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
}

TEST(TensorTest, SwishOfZeroIsZero) { EXPECT_EQ(swish(Tensor::scalar(0.0)).item(), 0.0); }

TEST(TensorTest, SoftmaxOfEqualLogitsIsUniform) {
  auto y = softmax(Tensor({3}, {0.7, 0.7, 0.7}));
  for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(TensorTest, MatmulIdentityReturnsOperand) {
  Rng rng(3);
  auto m = random_tensor({3, 4}, rng);
  auto eye = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto y = matmul(eye, m);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(y[i], m[i]);
}

TEST(TensorTest, ShapeMismatchNamesOperationAndShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4]"), std::string::npos);
  }
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 3, 3}), Tensor::zeros({1, 3, 1, 1}), Tensor()), ShapeError);
}

TEST(TensorTest, SumOfSquaresGradient) {
  Tensor x({2}, {1.0, 2.0}, true);
  backward(sum(square(x)));
  ASSERT_EQ(x.grad().size(), 2u);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(TensorTest, ConstantLossGivesZeroGradients) {
  Tensor x({3}, {1.0, -2.0, 0.5}, true);
  auto loss = add_scalar(sum(scale(x, 0.0)), 4.2);
  EXPECT_DOUBLE_EQ(loss.item(), 4.2);
  backward(loss);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(TensorTest, BackwardRejectsNonScalarAndUnrecordedLoss) {
  Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(square(x)), ShapeError);
  EXPECT_THROW(backward(Tensor::scalar(1.0)), std::logic_error);
}

TEST(TensorTest, SharedSubexpressionVisitedOnce) {
  Tensor x({1}, {3.0}, true);
  auto y = mul(x, x);            // x^2
  auto z = add(y, mul(y, x));    // x^2 + x^3, y reused
  auto loss = sum(z);
  auto record = computation_record(loss);
  std::set<Node*> unique(record.begin(), record.end());
  EXPECT_EQ(unique.size(), record.size());
  EXPECT_EQ(record.back(), loss.node().get());
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 3.0 + 3 * 9.0);
}

TEST(TensorTest, ResultsWithoutGradInputsCarryNoRecord) {
  auto y = exp(Tensor({2}, {0.0, 1.0}));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(TensorTest, Conv1x1IdentityReproducesInput) {
  Rng rng(11);
  auto x = random_tensor({3, 4, 5}, rng);
  std::vector<double> w(9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  auto y = conv2d(x, Tensor({3, 3, 1, 1}, w), Tensor());
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(TensorTest, ConvSamePaddingPreservesShapeForEvenKernels) {
  Rng rng(5);
  auto x = random_tensor({2, 3, 8}, rng);
  for (std::size_t k : {2u, 3u, 6u, 7u}) {
    auto w = random_tensor({4, 2, 1, k}, rng);
    auto y = conv2d(x, w, random_tensor({4}, rng));
    EXPECT_EQ(y.shape(), (Shape{4, 3, 8})) << "kernel " << k;
  }
}

TEST(TensorTest, LayerNormOutputHasZeroMeanUnitVariance) {
  Rng rng(2);
  auto x = random_tensor({4, 6}, rng, -3.0, 5.0);
  auto y = layer_norm(x, Tensor::full({6}, 1.0), Tensor::zeros({6}), 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 6; ++j) m += y[r * 6 + j];
    m /= 6;
    for (std::size_t j = 0; j < 6; ++j) v += (y[r * 6 + j] - m) * (y[r * 6 + j] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6, 1.0, 1e-12);
  }
}

TEST(TensorTest, ForwardIsDeterministic) {
  Rng rng(9);
  auto x = random_tensor({2, 5, 6}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto a = softmax(conv2d(x, w, Tensor()));
  auto b = softmax(conv2d(x, w, Tensor()));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(TensorTest, PermuteAndSliceRoundTrip) {
  Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  auto t = permute(x, {1, 0});
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(std::vector<double>(t.values().begin(), t.values().end()), (std::vector<double>{0, 3, 1, 4, 2, 5}));
  auto s = slice(x, 1, 1, 3);
  EXPECT_EQ(std::vector<double>(s.values().begin(), s.values().end()), (std::vector<double>{1, 2, 4, 5}));
  auto c = concat({slice(x, 1, 0, 1), s}, 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(c[i], x[i]);
}

// Property: every differentiable op matches central differences on random
// small inputs, over 20 seeds.
struct OpCase {
  const char* name;
  std::function<void(Rng&, std::uint64_t)> check;
};

void expect_grad_ok(const std::function<Tensor()>& loss, std::vector<std::pair<std::string, Tensor>> leaves,
                    const char* op, std::uint64_t seed) {
  auto r = testing::grad_check(loss, std::move(leaves));
  EXPECT_LE(r.max_rel_error, 1e-4) << op << " seed " << seed << " worst " << r.worst;
}

class OpGradientProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradientProperty, MatchesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  Rng rng(seed);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto row = random_tensor({4}, rng);
  auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  const std::uint64_t ws = seed * 31 + 7;

  expect_grad_ok([&] { return weighted_sum(add(a, row), ws); }, {{"a", a}, {"row", row}}, "add", seed);
  expect_grad_ok([&] { return weighted_sum(sub(a, b), ws); }, {{"a", a}, {"b", b}}, "sub", seed);
  expect_grad_ok([&] { return weighted_sum(mul(a, row), ws); }, {{"a", a}, {"row", row}}, "mul", seed);
  expect_grad_ok([&] { return weighted_sum(div(a, pos), ws); }, {{"a", a}, {"pos", pos}}, "div", seed);
  expect_grad_ok([&] { return weighted_sum(exp(a), ws); }, {{"a", a}}, "exp", seed);
  expect_grad_ok([&] { return weighted_sum(log(pos), ws); }, {{"pos", pos}}, "log", seed);
  expect_grad_ok([&] { return weighted_sum(sqrt(pos), ws); }, {{"pos", pos}}, "sqrt", seed);
  expect_grad_ok([&] { return weighted_sum(square(a), ws); }, {{"a", a}}, "square", seed);
  expect_grad_ok([&] { return weighted_sum(sigmoid(a), ws); }, {{"a", a}}, "sigmoid", seed);
  expect_grad_ok([&] { return weighted_sum(swish(a), ws); }, {{"a", a}}, "swish", seed);
  expect_grad_ok([&] { return weighted_sum(tanh(a), ws); }, {{"a", a}}, "tanh", seed);
  expect_grad_ok([&] { return weighted_sum(relu(pos), ws); }, {{"pos", pos}}, "relu", seed);

  auto m = random_tensor({4, 5}, rng);
  auto bm = random_tensor({2, 3, 4}, rng);
  auto bm2 = random_tensor({2, 5, 4}, rng);
  expect_grad_ok([&] { return weighted_sum(matmul(a, m), ws); }, {{"a", a}, {"m", m}}, "matmul", seed);
  expect_grad_ok([&] { return weighted_sum(matmul(bm, m), ws); }, {{"bm", bm}, {"m", m}}, "matmul_b2", seed);
  expect_grad_ok([&] { return weighted_sum(matmul(bm, bm2, true), ws); }, {{"bm", bm}, {"bm2", bm2}},
                 "matmul_bt", seed);
  auto bias5 = random_tensor({5}, rng);
  expect_grad_ok([&] { return weighted_sum(linear(bm, m, bias5), ws); }, {{"bm", bm}, {"m", m}, {"bias", bias5}},
                 "linear", seed);

  expect_grad_ok([&] { return weighted_sum(permute(bm, {2, 0, 1}), ws); }, {{"bm", bm}}, "permute", seed);
  expect_grad_ok([&] { return weighted_sum(reshape(bm, {6, 4}), ws); }, {{"bm", bm}}, "reshape", seed);
  expect_grad_ok([&] { return weighted_sum(concat({a, b}, 1), ws); }, {{"a", a}, {"b", b}}, "concat", seed);
  expect_grad_ok([&] { return weighted_sum(slice(bm, 2, 1, 3), ws); }, {{"bm", bm}}, "slice", seed);
  expect_grad_ok([&] { return square(sum(a)); }, {{"a", a}}, "sum", seed);
  expect_grad_ok([&] { return weighted_sum(sum(bm, 1), ws); }, {{"bm", bm}}, "sum_axis", seed);
  expect_grad_ok([&] { return weighted_sum(mean(bm, 2, true), ws); }, {{"bm", bm}}, "mean_axis", seed);
  expect_grad_ok([&] { return square(mean(a)); }, {{"a", a}}, "mean", seed);
  expect_grad_ok([&] { return weighted_sum(softmax(bm), ws); }, {{"bm", bm}}, "softmax", seed);

  auto gamma = random_tensor({4}, rng, 0.5, 1.5);
  auto beta = random_tensor({4}, rng);
  expect_grad_ok([&] { return weighted_sum(layer_norm(bm, gamma, beta), ws); },
                 {{"bm", bm}, {"gamma", gamma}, {"beta", beta}}, "layer_norm", seed);

  auto img = random_tensor({2, 3, 6}, rng);
  const std::size_t kh = 1 + seed % 3, kw = 2 + seed % 6;
  auto w = random_tensor({3, 2, kh, kw}, rng);
  auto cb = random_tensor({3}, rng);
  expect_grad_ok([&] { return weighted_sum(conv2d(img, w, cb), ws); }, {{"img", img}, {"w", w}, {"cb", cb}},
                 "conv2d", seed);

  const std::vector<std::size_t> ids{2, 0, 2, 1};
  expect_grad_ok([&] { return weighted_sum(gather_rows(a, ids), ws); }, {{"a", a}}, "gather_rows", seed);
  expect_grad_ok([&] { return weighted_sum(avg_pool_last(img, 2), ws); }, {{"img", img}}, "avg_pool_last", seed);
  expect_grad_ok([&] { return weighted_sum(repeat_last(img, 2), ws); }, {{"img", img}}, "repeat_last", seed);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradientProperty, ::testing::Range<std::uint64_t>(1, 21));

// A ~1e3-parameter conv + attention + MLP network checked end to end.
TEST(TensorTest, SmallNetworkGradientMatchesFiniteDifferences) {
  Rng rng(42);
  auto x = random_tensor({2, 3, 8}, rng);
  auto w1 = random_tensor({6, 2, 3, 3}, rng, -0.4, 0.4);  // 108
  auto b1 = random_tensor({6}, rng);
  auto wq = random_tensor({6, 6}, rng, -0.4, 0.4);
  auto wk = random_tensor({6, 6}, rng, -0.4, 0.4);
  auto wv = random_tensor({6, 6}, rng, -0.4, 0.4);
  auto g = random_tensor({6}, rng, 0.5, 1.5);
  auto be = random_tensor({6}, rng);
  auto w2 = random_tensor({6, 48}, rng, -0.3, 0.3);
  auto w3 = random_tensor({48, 1}, rng, -0.3, 0.3);
  auto w4 = random_tensor({6, 6, 1, 7}, rng, -0.2, 0.2);  // 252
  auto target = random_tensor({3, 8}, rng);
  auto loss_fn = [&] {
    auto h = swish(conv2d(x, w1, b1));              // [6,3,8]
    h = add(h, conv2d(h, w4, Tensor()));            // [6,3,8]
    auto seq = permute(h, {2, 1, 0});               // [8,3,6] time-major
    auto q = linear(seq, wq, Tensor());
    auto k = linear(seq, wk, Tensor());
    auto v = linear(seq, wv, Tensor());
    auto att = softmax(scale(matmul(q, k, true), 1.0 / std::sqrt(6.0)));
    auto o = layer_norm(add(seq, matmul(att, v)), g, be);
    auto y = linear(swish(linear(o, w2, Tensor())), w3, Tensor());  // [8,3,1]
    auto pred = permute(reshape(y, {8, 3}), {1, 0});
    return mean(square(sub(pred, target)));
  };
  std::vector<std::pair<std::string, Tensor>> leaves{{"w1", w1}, {"b1", b1}, {"wq", wq}, {"wk", wk}, {"wv", wv},
                                                     {"g", g},   {"be", be}, {"w2", w2}, {"w3", w3}, {"w4", w4}};
  std::size_t count = 0;
  for (auto& [_, t] : leaves) count += t.size();
  EXPECT_LE(count, 1000u);
  EXPECT_GE(count, 700u);
  auto r = testing::grad_check(loss_fn, leaves);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace stormcast::nd
