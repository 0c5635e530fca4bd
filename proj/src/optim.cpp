#include "ssnt/optim.hpp"

#include <cmath>

#include "ssnt/errors.hpp"

namespace ssnt {

void adam_step(ParameterSet& params, const AdamConfig& cfg, std::uint64_t step) {
  if (step == 0) throw UsageError("adam_step: step counts from 1");
  for (const auto& p : params) {
    if (p.trainable && !p.grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params) {
    if (p.trainable) {
      auto value = p.value.data();
      auto grad = p.grad.data();
      auto m = p.adam_m.data();
      auto v = p.adam_v.data();
      for (std::size_t k = 0; k < value.size(); ++k) {
        const double gk = grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
        const double m_hat = m[k] / correction1;
        const double v_hat = v[k] / correction2;
        value[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
    p.grad.fill(0.0);
  }
}

double global_grad_norm(const ParameterSet& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.trainable) total += p.grad.squared_norm();
  }
  return std::sqrt(total);
}

double clip_gradients(ParameterSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (auto& p : params) {
    for (double& g : p.grad.data()) g *= factor;
  }
  return factor;
}

Vec dropout_mask(std::size_t len, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  Vec mask(len, 1.0);
  if (!training || rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return mask;
}

}  // namespace ssnt
