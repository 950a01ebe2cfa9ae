#include "gracias/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gracias {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

AttackResult finish(const ClassifierParams& model, const Tensor& x, std::size_t y, Tensor adv) {
  AttackResult res{std::move(adv), 0.0, false};
  for (std::size_t i = 0; i < x.size(); ++i) res.linf = std::max(res.linf, std::abs(res.adversarial[i] - x[i]));
  res.success = predict(model, res.adversarial) != y;
  return res;
}

using GradFn = Tensor (*)(const ClassifierParams&, const DefenseFn*, const Tensor&, std::size_t,
                          std::size_t);

Tensor plain_grad(const ClassifierParams& model, const DefenseFn*, const Tensor& x, std::size_t y,
                  std::size_t) {
  return loss_and_input_grad(model, x, y).input_grad;
}

Tensor bpda_grad(const ClassifierParams& model, const DefenseFn* defense, const Tensor& x,
                 std::size_t y, std::size_t) {
  return loss_and_input_grad(model, (*defense)(x), y).input_grad;
}

Tensor eot_grad_fn(const ClassifierParams& model, const DefenseFn* defense, const Tensor& x,
                   std::size_t y, std::size_t samples) {
  return eot_grad(model, *defense, x, y, samples);
}

AttackResult pgd_loop(const ClassifierParams& model, const DefenseFn* defense, const Tensor& x,
                      std::size_t y, const AttackConfig& config, GradFn grad_fn) {
  config.validate();
  Tensor adv = x;
  for (std::size_t t = 0; t < config.iters; ++t) {
    const Tensor grad = grad_fn(model, defense, adv, y, config.eot_samples);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += config.eps_step * sign(grad[i]);
    adv = project_linf(adv, x, config.eps);
  }
  return finish(model, x, y, std::move(adv));
}

}  // namespace

AttackConfig AttackConfig::from_pixel_scale(double eps255, double step255, std::size_t iters,
                                            std::size_t eot_samples, std::uint64_t seed) {
  AttackConfig c{eps255 / 255.0, step255 / 255.0, iters, eot_samples, seed};
  c.validate();
  return c;
}

void AttackConfig::validate() const {
  if (eps < 0.0 || eps_step < 0.0 || eps_step > eps) {
    throw std::invalid_argument("attack config: need 0 <= eps_step <= eps");
  }
  if (iters < 1) throw std::invalid_argument("attack config: iters must be >= 1");
  if (eot_samples < 1) throw std::invalid_argument("attack config: eot_samples must be >= 1");
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double eps) {
  if (!x_adv.same_shape(x_ref)) throw std::invalid_argument("project_linf: shape mismatch");
  Tensor out = x_adv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(x_ref[i] - eps, 0.0);
    const double hi = std::min(x_ref[i] + eps, 1.0);
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

AttackResult fgsm(const ClassifierParams& model, const Tensor& x, std::size_t y, double eps) {
  if (eps < 0.0) throw std::invalid_argument("fgsm: eps must be non-negative");
  const Tensor grad = loss_and_input_grad(model, x, y).input_grad;
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv[i] = std::clamp(adv[i] + eps * sign(grad[i]), 0.0, 1.0);
  }
  return finish(model, x, y, std::move(adv));
}

AttackResult pgd(const ClassifierParams& model, const Tensor& x, std::size_t y,
                 const AttackConfig& config) {
  return pgd_loop(model, nullptr, x, y, config, plain_grad);
}

AttackResult bpda_attack(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                         std::size_t y, const AttackConfig& config) {
  return pgd_loop(model, &defense, x, y, config, bpda_grad);
}

Tensor eot_grad(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                std::size_t y, std::size_t n) {
  if (n < 1) throw std::invalid_argument("eot_grad: need at least one sample");
  Tensor acc(x.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor grad = loss_and_input_grad(model, defense(x), y).input_grad;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
  }
  return scale(acc, 1.0 / static_cast<double>(n));
}

AttackResult eot_pgd(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                     std::size_t y, const AttackConfig& config) {
  return pgd_loop(model, &defense, x, y, config, eot_grad_fn);
}

}  // namespace gracias
