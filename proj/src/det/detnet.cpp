#include "stormcast/det/detnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stormcast/core/errors.hpp"
#include "stormcast/nd/adam.hpp"
#include "stormcast/nd/checkpoint.hpp"
#include "stormcast/nd/ops.hpp"

namespace stormcast::det {

namespace {

std::string block_name(std::size_t b, const char* part) { return "block" + std::to_string(b) + "." + part; }

}  // namespace

DetNet::DetNet(DetNetConfig config) : config_(config) {
  if (config_.width == 0) throw ConfigError("DetNet: width must be positive");
  const std::size_t C = config_.width;
  const std::size_t in = data::kNwpFeatures;
  nd::Rng rng(config_.seed);
  params_.add("in_proj.w", nd::glorot_uniform({in, C}, in, C, rng));
  params_.add("in_proj.b", nd::Tensor::zeros({C}));
  // zero start: the conditioned net begins as its unconditioned twin
  if (config_.use_condition) params_.add("cond_proj.w", nd::Tensor::zeros({config_.condition_dim, C}));
  for (std::size_t b = 0; b < kBlockKernels.size(); ++b) {
    const std::size_t k = kBlockKernels[b];
    for (const char* p : {"q", "k", "v"}) {
      params_.add(block_name(b, p) + ".w", nd::glorot_uniform({C, C, 1, k}, C * k, C * k, rng));
      // a key bias shifts every score of a query equally, so softmax ignores it
      if (p[0] != 'k') params_.add(block_name(b, p) + ".b", nd::Tensor::zeros({C}));
    }
    params_.add(block_name(b, "ff") + ".w", nd::glorot_uniform({C, C}, C, C, rng));
    params_.add(block_name(b, "ff") + ".b", nd::Tensor::zeros({C}));
  }
  const std::size_t cat = C * (kBlockKernels.size() + 1);
  params_.add("head.ln.gamma", nd::Tensor::full({cat}, 1.0));
  params_.add("head.ln.beta", nd::Tensor::zeros({cat}));
  params_.add("head.w", nd::glorot_uniform({cat, 1}, cat, 1, rng));
  params_.add("head.b", nd::Tensor::zeros({1}));
  params_.add("head.skip.w", nd::glorot_uniform({C, 1}, C, 1, rng));
}

nd::Tensor DetNet::forward(const nd::Tensor& nwp, const nd::Tensor& condition, const DisMatrix& dis) const {
  using namespace nd;
  if (nwp.rank() != 3 || nwp.dim(2) != data::kNwpFeatures) {
    throw ShapeError("DetNet: nwp must be [F,H,4], got " + shape_string(nwp.shape()));
  }
  const std::size_t F = nwp.dim(0), H = nwp.dim(1), C = config_.width;
  if (dis.farms != F) {
    throw ShapeError("DetNet: Dis matrix is " + std::to_string(dis.farms) + "x" + std::to_string(dis.farms) +
                     " but the window has " + std::to_string(F) + " farms");
  }
  Tensor h0 = linear(nwp, params_.get("in_proj.w"), params_.get("in_proj.b"));  // [F,H,C]
  if (config_.use_condition) {
    if (!condition.defined() || condition.rank() != 3 || condition.dim(0) != F || condition.dim(1) != H ||
        condition.dim(2) != config_.condition_dim) {
      throw ShapeError("DetNet: condition must be [" + std::to_string(F) + "," + std::to_string(H) + "," +
                       std::to_string(config_.condition_dim) + "]");
    }
    h0 = add(h0, linear(condition, params_.get("cond_proj.w"), Tensor()));
  }
  const Tensor bias = dis.tensor();
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(C));

  std::vector<Tensor> features{h0};
  Tensor x = permute(h0, {2, 0, 1});  // [C,F,H]
  for (std::size_t b = 0; b < kBlockKernels.size(); ++b) {
    auto qkv = [&](const char* p) {
      const std::string bias_name = block_name(b, p) + ".b";
      const Tensor y = conv2d(x, params_.get(block_name(b, p) + ".w"),
                              params_.contains(bias_name) ? params_.get(bias_name) : Tensor());
      return permute(y, {2, 1, 0});  // [H,F,C]
    };
    const Tensor q = qkv("q"), k = qkv("k"), v = qkv("v");
    const Tensor scores = add(scale(matmul(q, k, true), inv_sqrt_c), bias);  // [H,F,F]
    const Tensor attended = matmul(softmax(scores), v);                      // [H,F,C]
    const Tensor y = add(permute(x, {2, 1, 0}), attended);                   // [H,F,C]
    const Tensor ff =
        swish(linear(y, params_.get(block_name(b, "ff") + ".w"), params_.get(block_name(b, "ff") + ".b")));
    const Tensor z = permute(add(y, ff), {1, 0, 2});  // [F,H,C]
    features.push_back(z);
    x = permute(z, {2, 0, 1});
  }
  const Tensor normed = layer_norm(concat(features, 2), params_.get("head.ln.gamma"), params_.get("head.ln.beta"));
  const Tensor out = add(linear(normed, params_.get("head.w"), params_.get("head.b")),
                         linear(h0, params_.get("head.skip.w"), Tensor()));
  return reshape(out, {F, H});
}

nd::Tensor DetNet::predict(const data::ForecastWindow& w, const DisMatrix& dis) const {
  const nd::Tensor raw = forward(w, dis);
  std::vector<double> v(raw.values().begin(), raw.values().end());
  for (auto& e : v) e = std::clamp(e, 0.0, 1.0);
  return nd::Tensor(raw.shape(), std::move(v));
}

void DetNet::save(const std::filesystem::path& stem) const { nd::save_checkpoint(stem, params_.items()); }

DetNet DetNet::load(const std::filesystem::path& stem) {
  const auto loaded = nd::load_checkpoint(stem);
  auto find = [&](const char* name) {
    return std::find_if(loaded.begin(), loaded.end(), [&](const auto& p) { return p.first == name; });
  };
  const auto it = find("in_proj.w");
  if (it == loaded.end() || it->second.rank() != 2 || it->second.dim(0) != data::kNwpFeatures) {
    throw DataError("DetNet checkpoint lacks a [4,C] in_proj.w");
  }
  DetNetConfig cfg;
  cfg.width = it->second.dim(1);
  const auto cond = find("cond_proj.w");
  cfg.use_condition = cond != loaded.end();
  if (cfg.use_condition) {
    if (cond->second.rank() != 2) throw DataError("DetNet checkpoint: cond_proj.w must be a matrix");
    cfg.condition_dim = cond->second.dim(0);
  }
  DetNet net(cfg);
  net.params_.assign(loaded);
  return net;
}

nd::Tensor mse_loss(const nd::Tensor& prediction, const nd::Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + nd::shape_string(prediction.shape()) + " vs target " +
                     nd::shape_string(target.shape()));
  }
  return nd::mean(nd::square(nd::sub(prediction, target)));
}

nd::Tensor nwp_implied_power(const data::ForecastWindow& w, const data::NwpStats& stats,
                             const data::PowerCurve& curve) {
  const std::size_t F = w.nwp.dim(0), H = w.nwp.dim(1);
  std::vector<double> v(F * H);
  const auto z = w.nwp.values();
  for (std::size_t i = 0; i < F * H; ++i) {
    v[i] = curve.normalized(std::max(0.0, data::denormalize(z[i * data::kNwpFeatures], stats, 0)));
  }
  return nd::Tensor({F, H}, std::move(v));
}

double evaluate_mse(const DetNet& net, const data::WindowSet& set, const std::vector<std::size_t>& ids,
                    const DisMatrix& dis) {
  if (ids.empty()) throw DataError("evaluate_mse: no windows");
  double total = 0.0;
  for (std::size_t id : ids) {
    const auto& w = set.windows.at(id);
    total += mse_loss(net.predict(w, dis), w.target).item();
  }
  return total / static_cast<double>(ids.size());
}

DetTrainResult train_det(const data::WindowSet& set, const DisMatrix& dis, const DetTrainConfig& config) {
  if (set.split.train.empty()) throw DataError("train_det: the training split is empty");
  if (config.batch_size == 0) throw ConfigError("train_det: batch_size must be >= 1");
  config.curve.validate();

  DetTrainResult result{DetNet(config.net), {}, 0, 0.0, 0.0};
  DetNet& net = result.model;
  const auto& val_ids = set.split.val.empty() ? set.split.train : set.split.val;
  {
    double base = 0.0;
    for (std::size_t id : val_ids) {
      const auto& w = set.windows[id];
      base += mse_loss(nwp_implied_power(w, set.stats, config.curve), w.target).item();
    }
    result.baseline_val_mse = base / static_cast<double>(val_ids.size());
  }

  std::ofstream log;
  if (config.log_csv) {
    log.open(*config.log_csv);
    if (!log) throw DataError("train_det: cannot write " + config.log_csv->string());
    log << "epoch,train_mse,val_mse\n";
    log.precision(10);
  }

  result.best_val_mse = evaluate_mse(net, set, val_ids, dis);
  nd::ParameterSet best = net.params().clone();

  net.params().set_requires_grad(true);
  nd::Adam adam(net.params().items(), nd::AdamConfig{config.lr});
  std::vector<std::size_t> order = set.split.train;
  const std::size_t batches = (order.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  std::size_t step = 0, stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    nd::Rng rng(config.net.seed, 1000 + epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& w = set.windows[order[i]];
        const nd::Tensor loss = mse_loss(net.forward(w, dis), w.target);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("train_det: non-finite loss at epoch " + std::to_string(epoch) + ", window starting at step " +
                             std::to_string(w.start_step) + " (lr " + std::to_string(adam.learning_rate()) + ")");
        }
        train_sum += value;
        nd::backward(nd::scale(loss, 1.0 / static_cast<double>(end - start)));
      }
      adam.set_learning_rate(nd::cosine_annealing(config.lr, step++, total_steps));
      adam.step();
    }
    net.params().set_requires_grad(false);
    const double val = evaluate_mse(net, set, val_ids, dis);
    net.params().set_requires_grad(true);
    if (!std::isfinite(val)) throw NumericError("train_det: non-finite validation MSE at epoch " + std::to_string(epoch));
    const DetEpochLog entry{epoch, train_sum / static_cast<double>(order.size()), val};
    result.log.push_back(entry);
    if (log) log << entry.epoch << ',' << entry.train_mse << ',' << entry.val_mse << '\n';

    if (val < result.best_val_mse - config.min_improvement) {
      result.best_val_mse = val;
      result.best_epoch = epoch;
      best = net.params().clone();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  net.params().assign(best.items());
  net.params().set_requires_grad(false);
  return result;
}

}  // namespace stormcast::det
