#include "ecgqa/optim.hpp"

#include <cmath>
#include <numbers>

#include "ecgqa/errors.hpp"

namespace ecgqa {

void AdamWConfig::validate() const {
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw InvalidArgument("AdamW betas must be in [0,1)");
  if (!(eps > 0)) throw InvalidArgument("AdamW eps must be positive");
  if (!(weight_decay >= 0)) throw InvalidArgument("AdamW weight decay must be non-negative");
}

void adamw_step(ParamStore& store, const std::vector<std::string>& names, AdamState& state,
                const AdamWConfig& config, double lr) {
  config.validate();
  for (const auto& name : names) {
    if (!store.grad(name).all_finite()) throw TrainingError("non-finite gradient for " + name);
  }
  const auto t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& name : names) {
    Tensor& w = store.value(name);
    const Tensor& g = store.grad(name);
    auto [mit, m_new] = state.m.try_emplace(name, Tensor(w.shape()));
    auto [vit, v_new] = state.v.try_emplace(name, Tensor(w.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != w.shape() || v.shape() != w.shape()) {
      throw ShapeError("optimizer state shape mismatch for " + name);
    }
    auto wd = w.data();
    auto gd = g.data();
    auto md = m.data();
    auto vd = v.data();
    for (std::size_t i = 0; i < wd.size(); ++i) {
      md[i] = config.beta1 * md[i] + (1.0 - config.beta1) * gd[i];
      vd[i] = config.beta2 * vd[i] + (1.0 - config.beta2) * gd[i] * gd[i];
      const double m_hat = md[i] / c1;
      const double v_hat = vd[i] / c2;
      wd[i] -= lr * config.weight_decay * wd[i];
      wd[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  ++state.step;
}

void round_to_f32(AdamState& state) {
  for (auto* group : {&state.m, &state.v}) {
    for (auto& [name, t] : *group) {
      for (double& x : t.data()) x = static_cast<double>(static_cast<float>(x));
    }
  }
}

double cosine_warmup_lr(std::size_t step, std::size_t total, double peak, double warmup_ratio) {
  if (total == 0) throw InvalidArgument("cosine_warmup_lr needs total_steps > 0");
  if (step > total) throw InvalidArgument("step beyond total_steps");
  if (!(warmup_ratio >= 0 && warmup_ratio < 1)) throw InvalidArgument("warmup_ratio must be in [0,1)");
  const auto warmup = static_cast<std::size_t>(std::floor(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step == total) return 0.0;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ecgqa
