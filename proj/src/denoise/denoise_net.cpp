#include "stormcast/denoise/denoise_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stormcast/core/errors.hpp"
#include "stormcast/nd/checkpoint.hpp"
#include "stormcast/nd/ops.hpp"

namespace stormcast::denoise {

using nd::Tensor;

nd::Tensor time_projection(double t, std::size_t time_dim) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("time embedding: t = " + std::to_string(t) + " is outside [0, 1]");
  if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time embedding: time_dim must be even and >= 2");
  const std::size_t n = time_dim / 2;
  std::vector<double> v(time_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double w = std::pow(1000.0, frac);
    v[i] = std::cos(2.0 * std::numbers::pi * w * t);
    v[n + i] = std::sin(2.0 * std::numbers::pi * w * t);
  }
  return Tensor({time_dim}, std::move(v));
}

nd::Tensor make_condition(const nd::Tensor& x_bar, const nd::Tensor& condition) {
  if (x_bar.rank() != 2 || condition.rank() != 3 || condition.dim(0) != x_bar.dim(0) ||
      condition.dim(1) != x_bar.dim(1)) {
    throw ShapeError("make_condition: x_bar " + nd::shape_string(x_bar.shape()) + " and condition " +
                     nd::shape_string(condition.shape()) + " are not aligned");
  }
  const std::size_t F = x_bar.dim(0), H = x_bar.dim(1), d = condition.dim(2);
  std::vector<double> y((1 + d) * F * H);
  std::copy(x_bar.values().begin(), x_bar.values().end(), y.begin());
  const auto c = condition.values();
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t i = 0; i < F * H; ++i) y[(1 + k) * F * H + i] = c[i * d + k];
  return Tensor({1 + d, F, H}, std::move(y));
}

namespace {

std::string lvl(const char* prefix, std::size_t l) { return prefix + std::to_string(l); }

}  // namespace

DenoiseNet::DenoiseNet(DenoiseConfig config) : config_(config) {
  const std::size_t C = config_.width, T = config_.time_dim, Y = 1 + config_.condition_dim;
  if (C == 0) throw ConfigError("DenoiseNet: width must be positive");
  time_projection(0.0, T);
  nd::Rng rng(config_.seed);
  auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool bias) {
    params_.add(name + ".w", nd::glorot_uniform({in, out}, in, out, rng));
    if (bias) params_.add(name + ".b", Tensor::zeros({out}));
  };
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", nd::glorot_uniform({out, in, 3, 3}, in * 9, out * 9, rng));
    params_.add(name + ".b", Tensor::zeros({out}));
  };
  dense("time.mlp0", T, C, true);
  dense("time.mlp1", C, C, true);
  dense("time.mlp2", C, C, true);
  for (std::size_t l = 0; l <= kLevels; ++l) dense(lvl("time.level", l), C, C, true);

  conv("cond.conv0", Y, C);
  conv("cond.conv1", C, C);

  for (std::size_t l = 0; l <= kLevels; ++l) {
    conv(lvl("enc", l) + ".conv0", l == 0 ? 1 : C, C);
    conv(lvl("enc", l) + ".conv1", C, C);
    for (const char* p : {".q", ".k", ".v", ".o"}) dense(lvl("xattn", l) + p, C, C, false);
  }
  for (std::size_t l = kLevels; l-- > 0;) {
    conv(lvl("dec", l) + ".conv0", 2 * C, C);
    conv(lvl("dec", l) + ".conv1", C, C);
  }
  params_.add("out.w", Tensor::zeros({1, C, 3, 3}));
  params_.add("out.b", Tensor::zeros({1}));
}

std::vector<Tensor> DenoiseNet::embed_time(double t) const {
  const Tensor raw = time_projection(t, config_.time_dim);
  Tensor h = nd::swish(nd::linear(raw, params_.get("time.mlp0.w"), params_.get("time.mlp0.b")));
  h = nd::swish(nd::linear(h, params_.get("time.mlp1.w"), params_.get("time.mlp1.b")));
  h = nd::swish(nd::linear(h, params_.get("time.mlp2.w"), params_.get("time.mlp2.b")));
  std::vector<Tensor> out;
  for (std::size_t l = 0; l <= kLevels; ++l) {
    out.push_back(nd::linear(h, params_.get(lvl("time.level", l) + ".w"), params_.get(lvl("time.level", l) + ".b")));
  }
  return out;
}

Tensor DenoiseNet::forward(const Tensor& x_t, const Tensor& y, double t,
                           const diffusion::DiffusionSchedule& schedule) const {
  using namespace nd;
  const std::size_t C = config_.width;
  if (x_t.rank() != 2) throw ShapeError("DenoiseNet: x_t must be [F,H], got " + shape_string(x_t.shape()));
  const std::size_t F = x_t.dim(0), H = x_t.dim(1);
  const std::size_t factor = std::size_t{1} << kLevels;
  if (H % factor != 0) {
    throw ShapeError("DenoiseNet: horizon " + std::to_string(H) + " is not divisible by " + std::to_string(factor));
  }
  if (y.rank() != 3 || y.dim(0) != 1 + config_.condition_dim || y.dim(1) != F || y.dim(2) != H) {
    throw ShapeError("DenoiseNet: condition must be [" + std::to_string(1 + config_.condition_dim) + "," +
                     std::to_string(F) + "," + std::to_string(H) + "], got " + shape_string(y.shape()));
  }
  const double sigma = schedule.sigma(t);
  if (!(sigma > 0.0)) throw ConfigError("DenoiseNet: sigma_t must be positive (t > 0)");

  const auto temb = embed_time(t);
  auto bias = [&](std::size_t l) { return reshape(temb[l], {C, 1, 1}); };
  auto cv = [&](const Tensor& x, const std::string& name) {
    return conv2d(x, params_.get(name + ".w"), params_.get(name + ".b"));
  };
  auto block = [&](const Tensor& x, const std::string& name, std::size_t l) {
    const Tensor h = swish(add(cv(x, name + ".conv0"), bias(l)));
    return swish(cv(h, name + ".conv1"));
  };
  // per farm: queries from trunk steps, keys/values from condition steps
  auto cross = [&](const Tensor& h, const Tensor& c, std::size_t l) {
    const std::string p = lvl("xattn", l);
    const Tensor hq = permute(h, {1, 2, 0}), cc = permute(c, {1, 2, 0});  // [F,Hl,C]
    const Tensor q = linear(hq, params_.get(p + ".q.w"), Tensor());
    const Tensor k = linear(cc, params_.get(p + ".k.w"), Tensor());
    const Tensor v = linear(cc, params_.get(p + ".v.w"), Tensor());
    const Tensor a = softmax(scale(matmul(q, k, true), 1.0 / std::sqrt(static_cast<double>(C))));
    const Tensor o = linear(matmul(a, v), params_.get(p + ".o.w"), Tensor());
    return add(h, permute(o, {2, 0, 1}));
  };

  Tensor c = swish(add(cv(y, "cond.conv0"), bias(0)));
  c = swish(cv(c, "cond.conv1"));

  std::vector<Tensor> skips;
  Tensor h = reshape(x_t, {1, F, H});
  for (std::size_t l = 0; l <= kLevels; ++l) {
    if (l > 0) {
      h = avg_pool_last(h, 2);
      c = avg_pool_last(c, 2);
    }
    h = cross(block(h, lvl("enc", l), l), c, l);
    if (l < kLevels) skips.push_back(h);
  }
  for (std::size_t l = kLevels; l-- > 0;) {
    h = concat({repeat_last(h, 2), skips[l]}, 0);
    h = block(h, lvl("dec", l), l);
  }
  const Tensor raw = cv(h, "out");
  return reshape(scale(raw, 1.0 / sigma), {F, H});
}

void DenoiseNet::set_error_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("DenoiseNet: error scale must be positive and finite");
  error_scale_ = s;
}

void DenoiseNet::save(const std::filesystem::path& stem) const {
  auto items = params_.items();
  items.emplace_back("error_scale", Tensor({1}, {error_scale_}));
  nd::save_checkpoint(stem, items);
}

DenoiseNet DenoiseNet::load(const std::filesystem::path& stem) {
  const auto loaded = nd::load_checkpoint(stem);
  auto find = [&](const std::string& name) -> const Tensor& {
    auto it = std::find_if(loaded.begin(), loaded.end(), [&](const auto& p) { return p.first == name; });
    if (it == loaded.end()) throw DataError("DenoiseNet checkpoint lacks '" + name + "'");
    return it->second;
  };
  const Tensor& mlp0 = find("time.mlp0.w");
  const Tensor& cond0 = find("cond.conv0.w");
  DenoiseConfig cfg;
  cfg.time_dim = mlp0.dim(0);
  cfg.width = mlp0.dim(1);
  cfg.condition_dim = cond0.dim(1) - 1;
  DenoiseNet net(cfg);
  net.params_.assign(loaded);
  net.set_error_scale(find("error_scale")[0]);
  return net;
}

}  // namespace stormcast::denoise
