#pragma once

#include <cstdint>

#include "gracias/defense.hpp"
#include "gracias/model.hpp"
#include "gracias/tensor.hpp"

namespace gracias {

struct AttackConfig {
  double eps{16.0 / 255.0};      // L∞ budget on the [0,1] pixel scale
  double eps_step{2.0 / 255.0};  // per-iteration step
  std::size_t iters{40};
  std::size_t eot_samples{10};
  std::uint64_t seed{0};

  // Config files carry budgets on the 0-255 scale.
  static AttackConfig from_pixel_scale(double eps255, double step255, std::size_t iters,
                                       std::size_t eot_samples = 10, std::uint64_t seed = 0);
  void validate() const;
};

struct AttackResult {
  Tensor adversarial;
  double linf{0.0};    // realized ||adv - x||_inf
  bool success{false}; // model label flipped away from the ground truth
};

// Elementwise clamp into [x_ref - eps, x_ref + eps] intersected with [0,1].
Tensor project_linf(const Tensor& x_adv, const Tensor& x_ref, double eps);

// Single signed-gradient step of size eps, clamped to the pixel range.
AttackResult fgsm(const ClassifierParams& model, const Tensor& x, std::size_t y, double eps);

// Iterated signed-gradient steps with L∞ projection after each one.
AttackResult pgd(const ClassifierParams& model, const Tensor& x, std::size_t y,
                 const AttackConfig& config);

// PGD where every gradient is taken at defense(x_t) (fresh defense randomness
// per step) and applied to x_t as if the defense were the identity.
AttackResult bpda_attack(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                         std::size_t y, const AttackConfig& config);

// Mean of n identity-backward gradients through fresh defense draws.
Tensor eot_grad(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                std::size_t y, std::size_t n);

// PGD driven by the EOT-averaged gradient.
AttackResult eot_pgd(const ClassifierParams& model, const DefenseFn& defense, const Tensor& x,
                     std::size_t y, const AttackConfig& config);

}  // namespace gracias
