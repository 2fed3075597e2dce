#include "stormcast/denoise/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "stormcast/core/errors.hpp"
#include "stormcast/nd/adam.hpp"
#include "stormcast/nd/ops.hpp"

namespace stormcast::denoise {

std::vector<DenoiseExample> build_examples(const data::WindowSet& set, const std::vector<std::size_t>& ids,
                                           const det::DetNet& det, const det::DisMatrix& dis) {
  std::vector<DenoiseExample> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    const auto& w = set.windows.at(id);
    const nd::Tensor x_bar = det.predict(w, dis);
    out.push_back({nd::sub(w.target, x_bar), make_condition(x_bar, w.condition)});
  }
  return out;
}

diffusion::ScoreFn score_fn(const DenoiseNet& net, const diffusion::DiffusionSchedule& schedule) {
  // errors are scaled to unit RMS, so N(0, I) is the prior and its score at every t is -x;
  // the network adds a correction to it
  return [&net, schedule](const nd::Tensor& x, const nd::Tensor& y, double t) {
    return nd::sub(net.forward(x, y, t, schedule), x);
  };
}

namespace {

nd::Tensor scaled(const nd::Tensor& x, double error_scale) { return nd::scale(x, 1.0 / error_scale); }

nd::Tensor normal_like(const nd::Tensor& x, nd::Rng& rng) {
  std::vector<double> z(x.size());
  rng.fill_normal(z);
  return nd::Tensor(x.shape(), std::move(z));
}

}  // namespace

double denoise_loss(const diffusion::ScoreFn& score, const std::vector<DenoiseExample>& examples, double error_scale,
                    const diffusion::DiffusionSchedule& schedule, std::uint64_t seed, std::size_t draws,
                    double t_min) {
  if (examples.empty() || draws == 0) throw DataError("denoise_loss: nothing to evaluate");
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    nd::Rng rng(seed, 50000 + i);
    const nd::Tensor x0 = scaled(examples[i].x0, error_scale);
    for (std::size_t k = 0; k < draws; ++k) {
      const double t = rng.uniform(t_min, 1.0);
      const nd::Tensor z = normal_like(x0, rng);
      total += diffusion::noise_matching_loss(score, x0, examples[i].y, t, z, schedule).item();
    }
  }
  return total / static_cast<double>(examples.size() * draws);
}

DenoiseTrainResult train_denoiser(const std::vector<DenoiseExample>& train, const std::vector<DenoiseExample>& val,
                                  const DenoiseTrainConfig& config) {
  if (train.empty()) throw DataError("train_denoiser: no training examples");
  if (config.batch_size == 0) throw ConfigError("train_denoiser: batch_size must be >= 1");
  if (!(config.t_min > 0.0 && config.t_min < 1.0)) throw ConfigError("train_denoiser: t_min must lie in (0, 1)");

  DenoiseTrainResult result{DenoiseNet(config.net), {}, 0, 0.0};
  DenoiseNet& net = result.model;
  double ss = 0.0, n = 0.0;
  for (const auto& ex : train) {
    for (double v : ex.x0.values()) ss += v * v;
    n += static_cast<double>(ex.x0.size());
  }
  net.set_error_scale(std::max(std::sqrt(ss / n), 1e-9));
  const double scale = net.error_scale();
  const auto& val_set = val.empty() ? train : val;
  const auto& schedule = config.schedule;
  const std::uint64_t val_seed = config.net.seed ^ 0x5eedULL;

  std::ofstream log;
  if (config.log_csv) {
    log.open(*config.log_csv);
    if (!log) throw DataError("train_denoiser: cannot write " + config.log_csv->string());
    log << "epoch,train_loss,val_loss\n";
    log.precision(10);
  }

  const auto fn = score_fn(net, schedule);
  result.best_val_loss = denoise_loss(fn, val_set, scale, schedule, val_seed, config.val_draws, config.t_min);
  nd::ParameterSet best = net.params().clone();

  net.params().set_requires_grad(true);
  nd::Adam adam(net.params().items(), nd::AdamConfig{config.lr});
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batches = (order.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  std::size_t step = 0, stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    nd::Rng rng(config.net.seed, 1000 + epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double train_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      adam.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = train[order[i]];
        const nd::Tensor x0 = scaled(ex.x0, scale);
        const double t = rng.uniform(config.t_min, 1.0);
        const nd::Tensor z = normal_like(x0, rng);
        const nd::Tensor loss = diffusion::noise_matching_loss(fn, x0, ex.y, t, z, schedule);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("train_denoiser: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + " (t=" + std::to_string(t) + ")");
        }
        train_sum += value;
        nd::backward(nd::scale(loss, 1.0 / static_cast<double>(end - start)));
      }
      adam.set_learning_rate(nd::cosine_annealing(config.lr, step++, total_steps));
      adam.step();
    }
    net.params().set_requires_grad(false);
    const double v = denoise_loss(fn, val_set, scale, schedule, val_seed, config.val_draws, config.t_min);
    net.params().set_requires_grad(true);
    if (!std::isfinite(v)) throw NumericError("train_denoiser: non-finite validation loss at epoch " + std::to_string(epoch));
    const DenoiseEpochLog entry{epoch, train_sum / static_cast<double>(order.size()), v};
    result.log.push_back(entry);
    if (log) log << entry.epoch << ',' << entry.train_loss << ',' << entry.val_loss << '\n';
    if (v < result.best_val_loss - config.min_improvement) {
      result.best_val_loss = v;
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

diffusion::SampleSet reconstruct(const nd::Tensor& x_bar, const diffusion::SampleSet& errors, double error_scale) {
  const std::size_t m = errors.sample_size();
  if (x_bar.shape() != errors.shape) throw ShapeError("reconstruct: x_bar and error shapes differ");
  diffusion::SampleSet out = errors;
  const auto xb = x_bar.values();
  for (std::size_t s = 0; s < out.count; ++s)
    for (std::size_t i = 0; i < m; ++i) out.values[s * m + i] = xb[i] + error_scale * errors.values[s * m + i];
  return out;
}

void clip_unit(diffusion::SampleSet& set) {
  for (auto& v : set.values) v = std::clamp(v, 0.0, 1.0);
}

diffusion::SampleSet forecast_samples(const diffusion::ScoreFn& score, double error_scale, const nd::Tensor& x_bar,
                                      const nd::Tensor& y, const diffusion::DiffusionSchedule& schedule,
                                      std::uint64_t seed, std::size_t count) {
  auto set = reconstruct(x_bar, diffusion::reverse_sample(score, y, x_bar.shape(), schedule, seed, count), error_scale);
  clip_unit(set);
  return set;
}

diffusion::SampleSet forecast_samples(const DenoiseNet& net, const nd::Tensor& x_bar, const nd::Tensor& y,
                                      const diffusion::DiffusionSchedule& schedule, std::uint64_t seed,
                                      std::size_t count) {
  return forecast_samples(score_fn(net, schedule), net.error_scale(), x_bar, y, schedule, seed, count);
}

}  // namespace stormcast::denoise
