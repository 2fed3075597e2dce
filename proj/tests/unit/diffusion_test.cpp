#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/diffusion/sampler.hpp"
#include "stormcast/diffusion/schedule.hpp"
#include "stormcast/nd/ops.hpp"

using namespace stormcast;
using diffusion::DiffusionSchedule;

namespace {

nd::Tensor normal_tensor(nd::Shape shape, nd::Rng& rng) {
  std::vector<double> v(nd::numel(shape));
  rng.fill_normal(v);
  return nd::Tensor(std::move(shape), std::move(v));
}

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

// Exact score of the diffused N(m, s^2) target.
diffusion::ScoreFn gaussian_score(double m, double s, const DiffusionSchedule& sched) {
  return [m, s, sched](const nd::Tensor& x, const nd::Tensor&, double t) {
    const double e = std::exp(-sched.alpha_bar(t));
    const double var = s * s * e * e + sched.sigma2(t);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -(x[i] - m * e) / var;
    return nd::Tensor(x.shape(), std::move(out));
  };
}

}  // namespace

TEST(Schedule, DefaultInvariants) {
  const DiffusionSchedule s;
  EXPECT_DOUBLE_EQ(s.alpha(0.0), 0.1);
  EXPECT_DOUBLE_EQ(s.alpha(1.0), 20.0);
  EXPECT_NEAR(s.alpha_bar(1.0), 10.05, 1e-12);
  EXPECT_NEAR(s.sigma2(1.0), 1.0 - std::exp(-20.1), 1e-15);
  EXPECT_EQ(s.steps(), 100u);
  EXPECT_DOUBLE_EQ(s.dt(), 0.01);
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    EXPECT_GT(s.alpha(t), 0.0);
    EXPECT_GT(s.alpha_bar(t), prev);
    prev = s.alpha_bar(t);
    if (i > 0) {
      EXPECT_GT(s.sigma(t), 0.0);
      EXPECT_LT(s.sigma(t), 1.0);
    }
  }
}

TEST(Schedule, QuadratureMatchesClosedForm) {
  const DiffusionSchedule lin;
  const auto quad = DiffusionSchedule::custom([](double t) { return 0.1 + 19.9 * t; });
  EXPECT_FALSE(quad.is_linear());
  for (double t : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) EXPECT_NEAR(quad.alpha_bar(t), lin.alpha_bar(t), 1e-12) << t;
}

TEST(Schedule, RejectsNegativeAlphaAndZeroSteps) {
  EXPECT_THROW(DiffusionSchedule(-0.1, 1.0), ConfigError);
  EXPECT_THROW(DiffusionSchedule(0.5, -1.0), ConfigError);
  EXPECT_THROW(DiffusionSchedule(0.1, 19.9, 0), ConfigError);
  EXPECT_THROW(DiffusionSchedule::custom([](double t) { return 0.5 - t; }), ConfigError);
}

TEST(ForwardKernel, Examples) {
  const DiffusionSchedule s;
  const nd::Tensor x({3}, {1.0, -2.0, 0.5});
  auto same = diffusion::forward_kernel(x, 0.3, 0.3, s);
  EXPECT_EQ(same.variance, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(same.mean[i], x[i]);

  auto half = diffusion::forward_kernel(nd::Tensor({1}, {1.0}), 0.0, 0.5, s);
  EXPECT_NEAR(s.alpha_bar(0.5), 2.5375, 1e-15);
  EXPECT_NEAR(half.mean[0], 0.07907, 5e-5);
  EXPECT_NEAR(half.mean[0], std::exp(-2.5375), 1e-15);
  EXPECT_NEAR(half.variance, 0.99375, 5e-5);

  auto full = diffusion::forward_kernel(nd::Tensor({1}, {1.0}), 0.0, 1.0, s);
  EXPECT_NEAR(full.mean[0], 4.3e-5, 1e-6);
  EXPECT_THROW(diffusion::forward_kernel(x, 0.6, 0.5, s), ConfigError);
}

TEST(ForwardKernel, PriorIsCloseToStandardNormal) {
  const DiffusionSchedule s;
  auto k = diffusion::forward_kernel(nd::Tensor({1}, {1.0}), 0.0, 1.0, s);
  EXPECT_LE(std::abs(k.mean[0]), 1e-3);
  EXPECT_LE(std::abs(k.variance - 1.0), 1e-3);
}

TEST(ForwardKernel, ComposesExactly) {
  const DiffusionSchedule s;
  for (auto [tau, t1, t2] : {std::array{0.0, 0.2, 0.5}, std::array{0.1, 0.4, 1.0}, std::array{0.3, 0.3, 0.9}}) {
    const nd::Tensor x({1}, {1.7});
    const auto a = diffusion::forward_kernel(x, tau, t1, s);
    const auto b = diffusion::forward_kernel(a.mean, t1, t2, s);
    const auto direct = diffusion::forward_kernel(x, tau, t2, s);
    const double fb = b.mean[0] / a.mean[0];
    EXPECT_NEAR(b.mean[0], direct.mean[0], 1e-14);
    EXPECT_NEAR(a.variance * fb * fb + b.variance, direct.variance, 1e-14);
  }
}

TEST(Perturb, Examples) {
  const DiffusionSchedule s;
  const nd::Tensor x0({2}, {0.3, -0.4});
  const auto zero = diffusion::perturb(x0, 0.5, nd::Tensor::zeros({2}), s);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(zero[i], x0[i] * std::exp(-2.5375));
  nd::Rng rng(1);
  const auto at0 = diffusion::perturb(x0, 0.0, normal_tensor({2}, rng), s);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(at0[i], x0[i]);
}

TEST(Perturb, MonteCarloMatchesKernel) {
  const DiffusionSchedule s;
  const std::size_t n = 100000;
  nd::Rng rng(2);
  for (double t : {0.05, 0.2, 0.5}) {
    const auto xt = diffusion::perturb(nd::Tensor::full({n}, 0.8), t, normal_tensor({n}, rng), s);
    const auto m = moments(std::vector<double>(xt.values().begin(), xt.values().end()));
    const auto k = diffusion::forward_kernel(nd::Tensor({1}, {0.8}), 0.0, t, s);
    EXPECT_NEAR(m.mean, k.mean[0], 0.01 * std::max(std::abs(k.mean[0]), std::sqrt(k.variance)));
    EXPECT_NEAR(m.var, k.variance, 0.01 * k.variance);
  }
}

TEST(TrueScore, ReparameterizationIdentity) {
  const DiffusionSchedule s;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    nd::Rng rng(seed);
    const double t = rng.uniform(diffusion::kTMin, 1.0);
    const auto x0 = normal_tensor({3, 4}, rng), z = normal_tensor({3, 4}, rng);
    const auto score = diffusion::true_score(diffusion::perturb(x0, t, z, s), x0, t, s);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(score[i], -z[i] / s.sigma(t), 1e-9 / s.sigma(t));
  }
}

TEST(TrueScore, Examples) {
  const DiffusionSchedule s;
  const nd::Tensor x0({1}, {0.6});
  const auto mean = diffusion::forward_kernel(x0, 0.0, 0.4, s).mean;
  EXPECT_NEAR(diffusion::true_score(mean, x0, 0.4, s)[0], 0.0, 1e-15);
  const double sig = s.sigma(0.5);
  EXPECT_NEAR(diffusion::true_score(nd::Tensor({1}, {sig}), nd::Tensor({1}, {0.0}), 0.5, s)[0], -1.0 / sig, 1e-14);
  EXPECT_THROW(diffusion::true_score(x0, x0, 0.0, s), ConfigError);
}

TEST(NoiseMatchingLoss, OracleAndZeroNet) {
  const DiffusionSchedule s;
  nd::Rng rng(3);
  const auto x0 = normal_tensor({4, 6}, rng), z = normal_tensor({4, 6}, rng);
  const nd::Tensor y;
  diffusion::ScoreFn oracle = [&](const nd::Tensor& xt, const nd::Tensor&, double t) {
    return diffusion::true_score(xt, x0, t, s);
  };
  EXPECT_NEAR(diffusion::noise_matching_loss(oracle, x0, y, 0.3, z, s).item(), 0.0, 1e-18 * 24 + 1e-20);

  diffusion::ScoreFn zero = [](const nd::Tensor& xt, const nd::Tensor&, double) {
    return nd::Tensor::zeros(xt.shape());
  };
  double zz = 0.0;
  for (double v : z.values()) zz += v * v;
  EXPECT_DOUBLE_EQ(diffusion::noise_matching_loss(zero, x0, y, 0.3, z, s).item(), zz);

  // E||z||^2 = element count
  double total = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    const auto zr = normal_tensor({4, 6}, rng);
    total += diffusion::noise_matching_loss(zero, x0, y, rng.uniform(diffusion::kTMin, 1.0), zr, s).item();
  }
  EXPECT_NEAR(total / reps, 24.0, 4.0 * std::sqrt(48.0 / reps));
}

TEST(NoiseMatchingLoss, GradientMatchesFiniteDifferences) {
  const DiffusionSchedule s;
  nd::Rng rng(4);
  auto w = normal_tensor({5, 5}, rng);
  auto b = normal_tensor({5}, rng);
  const auto x0 = normal_tensor({3, 5}, rng), z = normal_tensor({3, 5}, rng), y = normal_tensor({3, 5}, rng);
  diffusion::ScoreFn net = [&](const nd::Tensor& xt, const nd::Tensor& cond, double t) {
    return nd::tanh(nd::add(nd::linear(xt, w, b), nd::scale(cond, t)));
  };
  auto r = stormcast::testing::grad_check([&] { return diffusion::noise_matching_loss(net, x0, y, 0.4, z, s); },
                                          {{"w", w}, {"b", b}});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(ReverseSample, RecoversGaussianTarget) {
  const DiffusionSchedule s;
  const double m = 0.3, sd = 0.2;
  const std::size_t S = 5000;
  const auto set = diffusion::reverse_sample(gaussian_score(m, sd, s), nd::Tensor(), {1}, s, 42, S);
  const auto mo = moments(set.values);
  EXPECT_NEAR(mo.mean, m, 3.0 * sd / std::sqrt(static_cast<double>(S)));
  EXPECT_NEAR(mo.var, sd * sd, 0.1 * sd * sd);
}

TEST(ReverseSample, SmallerStepShrinksMomentError) {
  const double m = 0.3, sd = 0.2;
  auto error = [&](std::size_t N) {
    const DiffusionSchedule s(0.1, 19.9, N);
    const auto set = diffusion::reverse_sample(gaussian_score(m, sd, s), nd::Tensor(), {200}, s, 7, 2000);
    const auto mo = moments(set.values);
    return std::abs(mo.var - sd * sd) / (sd * sd) + std::abs(mo.mean - m) / sd;
  };
  const double coarse = error(25), fine = error(400);
  EXPECT_LT(fine, coarse);
}

TEST(ReverseSample, DeterministicAndThreadIndependent) {
  const DiffusionSchedule s(0.1, 19.9, 50);
  const auto score = gaussian_score(0.1, 0.5, s);
  const auto a = diffusion::reverse_sample(score, nd::Tensor(), {2, 3}, s, 9, 1);
  const auto b = diffusion::reverse_sample(score, nd::Tensor(), {2, 3}, s, 9, 1);
  EXPECT_EQ(a.values, b.values);
  const auto par = diffusion::reverse_sample(score, nd::Tensor(), {2, 3}, s, 9, 37);
  const auto ser = diffusion::reference::reverse_sample(score, nd::Tensor(), {2, 3}, s, 9, 37);
  EXPECT_EQ(par.values, ser.values);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(par.values[i], a.values[i]);
}

TEST(ReverseSample, ReportsNonFiniteStep) {
  const DiffusionSchedule s(0.1, 19.9, 20);
  diffusion::ScoreFn bad = [](const nd::Tensor& x, const nd::Tensor&, double t) {
    return nd::Tensor::full(x.shape(), t < 0.5 ? std::nan("") : 0.0);
  };
  try {
    diffusion::reverse_sample(bad, nd::Tensor(), {2}, s, 1, 3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 12"), std::string::npos) << e.what();
  }
  EXPECT_THROW(diffusion::reverse_sample(bad, nd::Tensor(), {2}, s, 1, 0), ConfigError);
}

TEST(EulerMaruyama, MatchesClosedFormAtHalf) {
  const DiffusionSchedule s(0.1, 19.9, 1000);
  nd::Rng rng(11);
  const auto x = euler_maruyama_forward(1.0, 0.5, s, rng, 10000);
  const auto mo = moments(x);
  const auto k = diffusion::forward_kernel(nd::Tensor({1}, {1.0}), 0.0, 0.5, s);
  EXPECT_NEAR(mo.mean, k.mean[0], 1e-2 + 3.0 / std::sqrt(10000.0));
  EXPECT_NEAR(mo.var, k.variance, 3e-2);
}

TEST(EulerMaruyama, ZeroAlphaIsIdentity) {
  const DiffusionSchedule s(0.0, 0.0, 100);
  nd::Rng rng(12);
  for (double v : euler_maruyama_forward(0.7, 1.0, s, rng, 100)) EXPECT_EQ(v, 0.7);
}

TEST(EulerMaruyama, VarianceStaysBelowStationary) {
  // The explicit scheme's own stationary variance is 1 / (1 - alpha dt / 2) > 1.
  for (std::size_t N : {100, 1000}) {
    const DiffusionSchedule s(0.1, 19.9, N);
    const double bound = 1.0 / (1.0 - 0.5 * s.alpha(1.0) * s.dt());
    for (double t : {0.1, 0.3, 0.6, 1.0}) {
      nd::Rng rng(13);
      const auto mo = moments(euler_maruyama_forward(0.0, t, s, rng, 10000));
      EXPECT_LE(mo.var, bound + 3.0 * std::sqrt(2.0 / 10000.0)) << N << " " << t;
      if (N == 1000) { EXPECT_LE(mo.var, 1.0 + 3e-2) << t; }
    }
  }
}

TEST(SampleCsv, WritesScaledRows) {
  diffusion::SampleSet set{2, {2, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  const auto path = std::filesystem::temp_directory_path() / "stormcast_samples.csv";
  diffusion::write_samples_csv(path, set, {"A", "B"}, {1.0, 10.0});
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "sample_id,farm_id,step,value");
  EXPECT_EQ(lines[1], "0,A,0,0");
  EXPECT_EQ(lines[4], "0,B,0,30");
  EXPECT_EQ(lines[12], "1,B,2,110");
}
