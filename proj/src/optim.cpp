#include "growlen/optim.hpp"

#include <cmath>

namespace growlen {

void OptimizerConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optimizer: lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("optimizer: betas must be in [0, 1)");
  if (!(grad_clip > 0)) throw ConfigError("optimizer: grad_clip must be positive");
  if (!(warmup_frac >= 0 && warmup_frac < 1)) throw ConfigError("optimizer: warmup_frac in [0, 1)");
  if (!(min_lr_ratio >= 0 && min_lr_ratio <= 1)) throw ConfigError("optimizer: min_lr_ratio in [0, 1]");
}

OptimizerState OptimizerState::init(const ModelParams& params) {
  OptimizerState s;
  params.visit([&s](const std::string&, const Tensor& t) {
    s.m.emplace_back(static_cast<size_t>(t.size()), 0.0f);
    s.v.emplace_back(static_cast<size_t>(t.size()), 0.0f);
  });
  return s;
}

double lr_at(const OptimizerConfig& cfg, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return cfg.lr;
  const auto warmup = static_cast<int64_t>(std::ceil(cfg.warmup_frac * static_cast<double>(total_steps)));
  if (warmup > 0 && step < warmup)
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double min_lr = cfg.lr * cfg.min_lr_ratio;
  const auto span = static_cast<double>(total_steps - warmup);
  if (span <= 0) return min_lr;
  const double t = std::min(1.0, static_cast<double>(step - warmup) / span);
  return min_lr + 0.5 * (cfg.lr - min_lr) * (1.0 + std::cos(3.14159265358979323846 * t));
}

double clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  params.visit([&sq](const std::string&, Tensor& t) {
    if (!t.has_grad()) return;
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const float factor = static_cast<float>(max_norm / norm);
    params.visit([factor](const std::string&, Tensor& t) {
      if (!t.has_grad()) return;
      for (float& g : t.grad()) g *= factor;
    });
  }
  return norm;
}

void adamw_step(ModelParams& params, OptimizerState& state, const OptimizerConfig& cfg, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const float beta1 = static_cast<float>(cfg.beta1);
  const float beta2 = static_cast<float>(cfg.beta2);

  size_t slot = 0;
  params.visit([&](const std::string&, Tensor& t) {
    auto& m = state.m[slot];
    auto& v = state.v[slot];
    slot += 1;
    if (!t.has_grad()) return;
    const bool decay = t.ndim() == 2;  // weight matrices only
    auto data = t.data();
    auto grad = t.grad();
    for (size_t i = 0; i < data.size(); ++i) {
      const float g = grad[i];
      m[i] = beta1 * m[i] + (1.0f - beta1) * g;
      v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg.eps);
      if (decay) update += cfg.weight_decay * data[i];
      data[i] -= static_cast<float>(lr * update);
    }
  });
}

}  // namespace growlen
