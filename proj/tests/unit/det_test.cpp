#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gradcheck.hpp"
#include "stormcast/core/errors.hpp"
#include "stormcast/data/synth.hpp"
#include "stormcast/det/detnet.hpp"
#include "stormcast/det/dis.hpp"
#include "stormcast/nd/ops.hpp"

using namespace stormcast;
using det::DetNet;
using det::DetNetConfig;
using det::DisMatrix;

namespace {

std::vector<double> symmetric(std::size_t n, const std::vector<double>& upper) {
  std::vector<double> d(n * n, 0.0);
  std::size_t u = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = upper[u++];
  return d;
}

nd::Tensor random_tensor(nd::Shape shape, nd::Rng& rng, double s = 1.0) {
  std::vector<double> v(nd::numel(shape));
  for (auto& e : v) e = s * rng.normal();
  return nd::Tensor(std::move(shape), std::move(v));
}

DisMatrix random_dis(std::size_t F, nd::Rng& rng) {
  std::vector<Farm> farms;
  for (std::size_t f = 0; f < F; ++f) {
    farms.push_back(Farm{"F" + std::to_string(f), 20.0 + rng.uniform(0.0, 3.0), 110.0 + rng.uniform(0.0, 6.0), 100});
  }
  return det::build_dis_matrix(FarmCluster(farms));
}

nd::Tensor permute_farms(const nd::Tensor& t, const std::vector<std::size_t>& order) {
  const std::size_t row = t.size() / t.dim(0);
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy_n(t.values().begin() + static_cast<long>(order[i] * row), row, v.begin() + static_cast<long>(i * row));
  return nd::Tensor(t.shape(), std::move(v));
}

data::ForecastWindow make_window(std::size_t F, std::size_t H, std::size_t d, std::size_t start) {
  data::ForecastWindow w;
  w.start_step = start;
  w.horizon = H;
  w.first_influenced = H;
  w.nwp = nd::Tensor::zeros({F, H, data::kNwpFeatures});
  w.condition = nd::Tensor::zeros({F, H, d});
  w.target = nd::Tensor::zeros({F, H});
  return w;
}

data::NwpStats unit_stats() {
  data::NwpStats s;
  s.mean.fill(0.0);
  s.sd.fill(1.0);
  return s;
}

}  // namespace

TEST(DisMatrix, EntryAtOneStandardDeviationIsInverseE) {
  // {d01, d02, d12} chosen so that d01 equals the population SD of the off-diagonal distances.
  const auto dis = det::dis_from_distances(3, symmetric(3, {95.38683217187587, 100.0, 300.0}));
  EXPECT_NEAR(dis.sd_km, 95.38683217187587, 1e-9);
  EXPECT_NEAR(dis(0, 1), 0.36787944117144233, 1e-12);
  EXPECT_NEAR(dis(1, 2), std::exp(-std::pow(300.0 / dis.sd_km, 2)), 1e-15);
}

TEST(DisMatrix, InvariantsOnDefaultCluster) {
  const auto dis = det::build_dis_matrix(FarmCluster(data::default_farms()));
  ASSERT_EQ(dis.farms, 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(dis(i, i), 0.0);
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_EQ(dis(i, j), dis(j, i));
      EXPECT_GE(dis(i, j), 0.0);
      EXPECT_LT(dis(i, j), 1.0);
    }
  }
  EXPECT_EQ(det::build_dis_matrix(FarmCluster(data::default_farms())).values, dis.values);
}

TEST(DisMatrix, DecaysWithDistance) {
  // 40 farms about 1 km apart; one pair 30 km apart barely moves the SD.
  const std::size_t n = 40;
  std::vector<double> upper;
  for (std::size_t u = 0; u < n * (n - 1) / 2; ++u) upper.push_back(1.0 + 0.001 * static_cast<double>(u % 97));
  upper[0] = 30.0;
  const auto dis = det::dis_from_distances(n, symmetric(n, upper));
  EXPECT_LT(dis(0, 1), 1e-300);
  for (std::size_t j = 2; j + 1 < n; ++j) {
    const double dj = 1.0 + 0.001 * static_cast<double>((j - 1) % 97);
    const double dk = 1.0 + 0.001 * static_cast<double>(j % 97);
    if (dj < dk) { EXPECT_GT(dis(0, j), dis(0, j + 1)); }
  }
}

TEST(DisMatrix, RejectsDegenerateClusters) {
  EXPECT_THROW(det::build_dis_matrix(FarmCluster({Farm{"A", 20, 110, 100}})), ConfigError);
  EXPECT_THROW(det::build_dis_matrix(FarmCluster({Farm{"A", 20, 110, 100}, Farm{"B", 20, 110, 100},
                                                   Farm{"C", 20, 110, 100}})),
               DataError);
}

TEST(DisMatrix, EquidistantFarmsGiveZeroBias) {
  const auto dis = det::build_dis_matrix(FarmCluster({Farm{"A", 20, 110, 100}, Farm{"B", 21, 111, 100}}));
  EXPECT_EQ(dis.sd_km, 0.0);
  for (double v : dis.values) EXPECT_EQ(v, 0.0);
}

TEST(MseLoss, Examples) {
  const nd::Tensor a({2, 2}, {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(det::mse_loss(a, a).item(), 0.0);
  const nd::Tensor b({2, 2}, {0.0, 0.1, 0.2, 0.3});
  EXPECT_NEAR(det::mse_loss(a, b).item(), 0.01, 1e-15);
  EXPECT_THROW(det::mse_loss(a, nd::Tensor::zeros({4})), ShapeError);
}

TEST(MseLoss, NonNegativeAndZeroOnlyWhenEqual) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    nd::Rng rng(seed);
    const auto a = random_tensor({3, 5}, rng);
    auto b = a.detach();
    EXPECT_EQ(det::mse_loss(a, b).item(), 0.0);
    b.mutable_values()[rng.index(15)] += 1e-3;
    EXPECT_GT(det::mse_loss(a, b).item(), 0.0);
  }
}

TEST(MseLoss, GradientMatchesFiniteDifferences) {
  nd::Rng rng(3);
  auto p = random_tensor({4, 6}, rng);
  const auto t = random_tensor({4, 6}, rng);
  auto r = stormcast::testing::grad_check([&] { return det::mse_loss(p, t); }, {{"p", p}});
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(DetNet, FourBlocksWithNonUniformKernels) {
  DetNet net(DetNetConfig{8, 10, true, 1});
  for (std::size_t b = 0; b < 4; ++b) {
    for (const char* p : {"q", "k", "v"}) {
      const auto& w = net.params().get("block" + std::to_string(b) + "." + p + ".w");
      EXPECT_EQ(w.shape(), (nd::Shape{8, 8, 1, det::kBlockKernels[b]}));
    }
  }
  EXPECT_FALSE(net.params().contains("block4.q.w"));
  EXPECT_EQ(det::kBlockKernels, (std::array<std::size_t, 4>{2, 3, 6, 7}));
}

TEST(DetNet, ZeroHeadGivesZeroForecast) {
  DetNet net(DetNetConfig{6, 4, true, 2});
  for (auto& v : net.params().get("head.w").mutable_values()) v = 0.0;
  nd::Rng rng(1);
  const auto w = make_window(3, 12, 4, 0);
  const auto out = net.forward(w, random_dis(3, rng));
  ASSERT_EQ(out.shape(), (nd::Shape{3, 12}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(DetNet, FarmPermutationEquivariance) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    nd::Rng rng(seed);
    const std::size_t F = 5, H = 16, d = 3;
    DetNet net(DetNetConfig{6, d, true, seed});
    const auto dis = random_dis(F, rng);
    const auto nwp = random_tensor({F, H, 4}, rng), cond = random_tensor({F, H, d}, rng);
    std::vector<std::size_t> order(F);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    const auto ref = permute_farms(net.forward(nwp, cond, dis), order);
    const auto out = net.forward(permute_farms(nwp, order), permute_farms(cond, order), dis.permuted(order));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(DetNet, SingleFarmAttentionIgnoresBias) {
  nd::Rng rng(4);
  DetNet net(DetNetConfig{6, 2, true, 4});
  const auto nwp = random_tensor({1, 10, 4}, rng), cond = random_tensor({1, 10, 2}, rng);
  const auto a = net.forward(nwp, cond, DisMatrix{1, {0.0}, 0.0});
  const auto b = net.forward(nwp, cond, DisMatrix{1, {5.0}, 0.0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a[i]));
    EXPECT_DOUBLE_EQ(a[i], b[i]);
  }
}

namespace {

void jitter_params(DetNet& net, nd::Rng& rng) {
  for (auto& [name, t] : net.params().items())
    for (auto& v : t.mutable_values()) v += rng.uniform(-0.3, 0.3);
}

}  // namespace

TEST(DetNet, PredictIsClippedAndDeterministic) {
  nd::Rng rng(5);
  DetNet net(DetNetConfig{6, 2, true, 5});
  auto w = make_window(4, 8, 2, 0);
  w.nwp = random_tensor({4, 8, 4}, rng, 5.0);
  w.condition = random_tensor({4, 8, 2}, rng, 5.0);
  const auto dis = random_dis(4, rng);
  const auto a = net.predict(w, dis), b = net.predict(w, dis);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a[i], 0.0);
    EXPECT_LE(a[i], 1.0);
    EXPECT_EQ(a[i], b[i]);
  }
}

TEST(DetNet, RejectsMismatchedDisAndCondition) {
  nd::Rng rng(6);
  DetNet net(DetNetConfig{4, 2, true, 6});
  const auto w = make_window(3, 8, 2, 0);
  EXPECT_THROW(net.forward(w, random_dis(4, rng)), ShapeError);
  const auto bad = make_window(3, 8, 5, 0);
  EXPECT_THROW(net.forward(bad, random_dis(3, rng)), ShapeError);
}

TEST(DetNet, UnconditionedVariantIgnoresCondition) {
  nd::Rng rng(7);
  DetNet net(DetNetConfig{4, 2, false, 7});
  auto w = make_window(3, 8, 2, 0);
  w.nwp = random_tensor({3, 8, 4}, rng);
  const auto dis = random_dis(3, rng);
  const auto a = net.forward(w, dis);
  w.condition = random_tensor({3, 8, 2}, rng);
  const auto b = net.forward(w, dis);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(DetNet, FreshConditionedNetMatchesUnconditionedTwin) {
  nd::Rng rng(10);
  const DetNet cond(DetNetConfig{4, 2, true, 12}), plain(DetNetConfig{4, 2, false, 12});
  auto w = make_window(3, 8, 2, 0);
  w.nwp = random_tensor({3, 8, 4}, rng);
  w.condition = random_tensor({3, 8, 2}, rng);
  const auto dis = random_dis(3, rng);
  const auto a = cond.forward(w, dis), b = plain.forward(w, dis);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(DetNet, CheckpointRoundTrip) {
  nd::Rng rng(8);
  DetNet net(DetNetConfig{5, 3, true, 8});
  jitter_params(net, rng);
  auto w = make_window(3, 8, 3, 0);
  w.nwp = random_tensor({3, 8, 4}, rng);
  w.condition = random_tensor({3, 8, 3}, rng);
  const auto dis = random_dis(3, rng);
  const auto stem = std::filesystem::temp_directory_path() / "stormcast_det_ckpt";
  net.save(stem);
  const DetNet back = DetNet::load(stem);
  EXPECT_EQ(back.config().width, 5u);
  EXPECT_EQ(back.config().condition_dim, 3u);
  const auto a = net.forward(w, dis), b = back.forward(w, dis);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(DetNet, GradientMatchesFiniteDifferences) {
  nd::Rng rng(9);
  DetNet net(DetNetConfig{3, 2, true, 9});
  jitter_params(net, rng);
  auto w = make_window(3, 8, 2, 0);
  w.nwp = random_tensor({3, 8, 4}, rng);
  w.condition = random_tensor({3, 8, 2}, rng);
  w.target = random_tensor({3, 8}, rng, 0.3);
  const auto dis = random_dis(3, rng);
  auto r = stormcast::testing::grad_check([&] { return det::mse_loss(net.forward(w, dis), w.target); }, net.params().items());
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

namespace {

// target = clip(0.5 + 0.15 z0 - 0.05 z2 + 0.1 * typhoon_effect * c0)
data::WindowSet teacher_set(std::size_t n_train, std::size_t n_val, double typhoon_effect, std::uint64_t seed) {
  const std::size_t F = 3, H = 8, d = 2;
  nd::Rng rng(seed);
  data::WindowSet set;
  set.stats = unit_stats();
  for (std::size_t i = 0; i < n_train + n_val; ++i) {
    auto w = make_window(F, H, d, i * H);
    w.nwp = random_tensor({F, H, 4}, rng);
    const bool storm = typhoon_effect != 0.0 && i % 2 == 0;
    if (storm) {
      w.typhoon = true;
      w.condition = random_tensor({F, H, d}, rng);
    }
    std::vector<double> t(F * H);
    for (std::size_t j = 0; j < F * H; ++j) {
      const double z0 = w.nwp[j * 4], z2 = w.nwp[j * 4 + 2], c0 = w.condition[j * d];
      t[j] = std::clamp(0.5 + 0.15 * z0 - 0.05 * z2 + typhoon_effect * c0, 0.0, 1.0);
    }
    w.target = nd::Tensor({F, H}, std::move(t));
    (i < n_train ? set.split.train : set.split.val).push_back(set.windows.size());
    set.windows.push_back(std::move(w));
  }
  return set;
}

double target_variance(const data::WindowSet& set, const std::vector<std::size_t>& ids) {
  double s = 0, s2 = 0, n = 0;
  for (auto id : ids)
    for (double v : set.windows[id].target.values()) {
      s += v;
      s2 += v * v;
      n += 1;
    }
  return s2 / n - (s / n) * (s / n);
}

}  // namespace

TEST(TrainDet, RecoversLinearTeacher) {
  const auto set = teacher_set(48, 12, 0.0, 21);
  det::DetTrainConfig cfg;
  cfg.net = DetNetConfig{8, 2, true, 3};
  cfg.epochs = 150;
  cfg.lr = 1e-2;
  cfg.batch_size = 4;
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  const auto res = det::train_det(set, dis, cfg);
  const double var = target_variance(set, set.split.val);
  EXPECT_LT(res.best_val_mse, 0.02 * var) << "variance " << var;
  EXPECT_LT(res.best_val_mse, 1e-3);
  EXPECT_LE(res.best_val_mse, res.baseline_val_mse);
}

TEST(TrainDet, ZeroLearningRateLeavesParametersUnchanged) {
  const auto set = teacher_set(8, 4, 0.0, 22);
  det::DetTrainConfig cfg;
  cfg.net = DetNetConfig{4, 2, true, 5};
  cfg.epochs = 3;
  cfg.lr = 0.0;
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  const auto res = det::train_det(set, dis, cfg);
  const DetNet fresh(cfg.net);
  const auto& a = res.model.params().items();
  const auto& b = fresh.params().items();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].first, b[i].first);
    for (std::size_t j = 0; j < a[i].second.size(); ++j) EXPECT_EQ(a[i].second[j], b[i].second[j]) << a[i].first;
  }
}

TEST(TrainDet, WritesEpochLog) {
  const auto set = teacher_set(8, 4, 0.0, 23);
  det::DetTrainConfig cfg;
  cfg.net = DetNetConfig{4, 2, true, 5};
  cfg.epochs = 3;
  cfg.patience = 100;
  cfg.log_csv = std::filesystem::temp_directory_path() / "stormcast_det_log.csv";
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  const auto res = det::train_det(set, dis, cfg);
  std::ifstream in(*cfg.log_csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,train_mse,val_mse");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u);
  EXPECT_EQ(res.log.size(), 3u);
}

TEST(TrainDet, NonFiniteInputIsReported) {
  auto set = teacher_set(4, 2, 0.0, 24);
  set.windows[set.split.train[1]].nwp.mutable_values()[0] = std::nan("");
  det::DetTrainConfig cfg;
  cfg.net = DetNetConfig{4, 2, true, 5};
  cfg.epochs = 2;
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  EXPECT_THROW(det::train_det(set, dis, cfg), NumericError);
}

TEST(TrainDet, EmptyTrainingSplitThrows) {
  data::WindowSet set;
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  EXPECT_THROW(det::train_det(set, dis, det::DetTrainConfig{}), DataError);
}

TEST(TrainDet, ConditionHelpsOnTyphoonWindows) {
  const auto set = teacher_set(48, 16, 0.1, 25);
  const auto dis = det::dis_from_distances(3, symmetric(3, {50.0, 120.0, 90.0}));
  det::DetTrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 3e-3;
  cfg.batch_size = 4;
  cfg.net = DetNetConfig{8, 2, true, 3};
  const auto with = det::train_det(set, dis, cfg);
  cfg.net.use_condition = false;
  const auto without = det::train_det(set, dis, cfg);
  std::vector<std::size_t> storm_val;
  for (auto id : set.split.val)
    if (set.windows[id].typhoon) storm_val.push_back(id);
  const double mse_with = det::evaluate_mse(with.model, set, storm_val, dis);
  const double mse_without = det::evaluate_mse(without.model, set, storm_val, dis);
  EXPECT_LE(mse_with, mse_without);
}
