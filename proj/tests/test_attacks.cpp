#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gracias/attacks.hpp"
#include "gracias/dataset.hpp"

using namespace gracias;

namespace {

Tensor random_image(std::vector<std::size_t> shape, Xoshiro256ss& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform01();
  return t;
}

ClassifierParams tiny_trained_model(Arch arch, std::uint64_t seed) {
  const Dataset data = gen_synthetic(3, 30, 10, seed);
  ClassifierParams p = init_classifier(arch, {10, 10, 1}, 3, seed, 16, 4);
  train_sgd(p, data.batch(), TrainConfig{0.1, 10, 8, seed});
  return p;
}

}  // namespace

TEST_CASE("project_linf: fixed point, saturation, idempotence") {
  Xoshiro256ss rng(81);
  const Tensor x = random_image({6, 6, 1}, rng);
  const double eps = 0.05;

  const Tensor same = project_linf(x, x, eps);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

  Tensor far = x;
  for (std::size_t i = 0; i < far.size(); ++i) far[i] += 2.0 * eps;
  const Tensor snapped = project_linf(far, x, eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(snapped[i] == doctest::Approx(std::min(x[i] + eps, 1.0)).epsilon(1e-15));
  }

  const Tensor z = random_image({6, 6, 1}, rng);
  const Tensor once = project_linf(z, x, eps);
  const Tensor twice = project_linf(once, x, eps);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(twice[i] == once[i]);
}

TEST_CASE("fgsm with zero budget returns the input") {
  const ClassifierParams model = tiny_trained_model(Arch::Linear, 82);
  Xoshiro256ss rng(82);
  const Tensor x = random_image({10, 10, 1}, rng);
  const AttackResult res = fgsm(model, x, 0, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(res.adversarial[i] == x[i]);
  CHECK(res.linf == 0.0);
}

TEST_CASE("fgsm matches the closed form on a linear model") {
  const ClassifierParams model = tiny_trained_model(Arch::Linear, 83);
  Xoshiro256ss rng(83);
  const Tensor x = random_image({10, 10, 1}, rng);
  const std::size_t y = 1;
  const double eps = 12.0 / 255.0;

  const Tensor probs = softmax(forward(model, x));
  const AttackResult res = fgsm(model, x, y, eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double grad = 0.0;
    for (std::size_t c = 0; c < model.num_classes; ++c) {
      grad += model.weights[0](c, i) * (probs[c] - (c == y ? 1.0 : 0.0));
    }
    const double step = grad > 0.0 ? eps : (grad < 0.0 ? -eps : 0.0);
    CHECK(res.adversarial[i] == doctest::Approx(std::clamp(x[i] + step, 0.0, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("fgsm increases the loss of a linear model") {
  const ClassifierParams model = tiny_trained_model(Arch::Linear, 84);
  Xoshiro256ss rng(84);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_image({10, 10, 1}, rng);
    const std::size_t y = rng.uniform_int(0, 2);
    const AttackResult res = fgsm(model, x, y, 4.0 / 255.0);
    const double before = loss_and_input_grad(model, x, y).loss;
    const double after = loss_and_input_grad(model, res.adversarial, y).loss;
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("single-step pgd equals fgsm") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 85);
  Xoshiro256ss rng(85);
  const Tensor x = random_image({10, 10, 1}, rng);
  const double eps = 16.0 / 255.0;

  AttackConfig cfg;
  cfg.eps = eps;
  cfg.eps_step = eps;
  cfg.iters = 1;
  const AttackResult via_pgd = pgd(model, x, 2, cfg);
  const AttackResult via_fgsm = fgsm(model, x, 2, eps);
  const Tensor projected = project_linf(via_fgsm.adversarial, x, eps);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(via_pgd.adversarial[i] == projected[i]);
}

TEST_CASE("pgd keeps every output inside the eps ball and pixel range") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 86);
  Xoshiro256ss rng(86);
  const AttackConfig cfg = AttackConfig::from_pixel_scale(16.0, 2.0, 20);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_image({10, 10, 1}, rng);
    const AttackResult res = pgd(model, x, trial % 3, cfg);
    CHECK(res.linf <= cfg.eps + 1e-12);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(res.adversarial[i] >= 0.0);
      CHECK(res.adversarial[i] <= 1.0);
      CHECK(std::abs(res.adversarial[i] - x[i]) <= cfg.eps + 1e-12);
    }
  }
}

TEST_CASE("attacks are bit-deterministic") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 87);
  Xoshiro256ss rng(87);
  const Tensor x = random_image({10, 10, 1}, rng);
  const AttackConfig cfg = AttackConfig::from_pixel_scale(16.0, 2.0, 10);

  const AttackResult a = pgd(model, x, 0, cfg);
  const AttackResult b = pgd(model, x, 0, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a.adversarial[i] == b.adversarial[i]);

  DefenseConfig dcfg = DefenseConfig::defaults_for(x.shape());
  dcfg.seed = 4242;
  const AttackResult c = bpda_attack(model, make_gracias_defense(dcfg), x, 0, cfg);
  const AttackResult d = bpda_attack(model, make_gracias_defense(dcfg), x, 0, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(c.adversarial[i] == d.adversarial[i]);
}

TEST_CASE("bpda through the identity defense follows the pgd trajectory") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 88);
  Xoshiro256ss rng(88);
  const Tensor x = random_image({10, 10, 1}, rng);
  const AttackConfig cfg = AttackConfig::from_pixel_scale(16.0, 2.0, 15);

  const AttackResult plain = pgd(model, x, 1, cfg);
  const AttackResult through_identity = bpda_attack(model, make_identity_defense(), x, 1, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(plain.adversarial[i] == through_identity.adversarial[i]);
  }
}

TEST_CASE("bpda iterates stay inside the eps ball with a randomized defense") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 89);
  Xoshiro256ss rng(89);
  const Tensor x = random_image({10, 10, 1}, rng);
  DefenseConfig dcfg = DefenseConfig::defaults_for(x.shape());
  dcfg.seed = 99;
  const AttackConfig cfg = AttackConfig::from_pixel_scale(16.0, 2.0, 10);
  const AttackResult res = bpda_attack(model, make_gracias_defense(dcfg), x, 1, cfg);
  CHECK(res.linf <= cfg.eps + 1e-12);
  for (double v : res.adversarial.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("eot_grad with one sample equals a single bpda gradient") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 90);
  Xoshiro256ss rng(90);
  const Tensor x = random_image({10, 10, 1}, rng);
  DefenseConfig dcfg = DefenseConfig::defaults_for(x.shape());
  dcfg.seed = 7;

  const Tensor via_eot = eot_grad(model, make_gracias_defense(dcfg), x, 1, 1);
  const DefenseFn defense = make_gracias_defense(dcfg);
  const Tensor via_bpda = loss_and_input_grad(model, defense(x), 1).input_grad;
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(via_eot[i] == via_bpda[i]);
}

TEST_CASE("eot over a deterministic defense is the defended gradient for any n") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 91);
  Xoshiro256ss rng(91);
  const Tensor x = random_image({10, 10, 1}, rng);
  const DefenseFn bd = make_bitdepth_defense(3);
  const Tensor expected = loss_and_input_grad(model, bd(x), 1).input_grad;
  for (std::size_t n : {std::size_t{1}, std::size_t{4}, std::size_t{9}}) {
    const Tensor got = eot_grad(model, bd, x, 1, n);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("variance of the eot mean gradient shrinks roughly like 1/n") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 92);
  Xoshiro256ss rng(92);
  const Tensor x = random_image({10, 10, 1}, rng);
  DefenseConfig dcfg = DefenseConfig::defaults_for(x.shape());

  auto coord_variance = [&](std::size_t n, std::uint64_t seed_base) {
    const std::size_t repeats = 40;
    std::vector<double> samples;
    for (std::size_t r = 0; r < repeats; ++r) {
      DefenseConfig cfg = dcfg;
      cfg.seed = derive_seed(seed_base, r);
      samples.push_back(eot_grad(model, make_gracias_defense(cfg), x, 1, n)[37]);
    }
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    return var / static_cast<double>(samples.size() - 1);
  };

  const double v1 = coord_variance(1, 1000);
  const double v16 = coord_variance(16, 2000);
  REQUIRE(v1 > 0.0);
  const double ratio = v1 / v16;
  CHECK(ratio > 4.0);    // clearly shrinking
  CHECK(ratio < 64.0);   // and consistent with ~16x
}

TEST_CASE("eot_pgd with one sample matches bpda given the same defense stream") {
  const ClassifierParams model = tiny_trained_model(Arch::Mlp, 93);
  Xoshiro256ss rng(93);
  const Tensor x = random_image({10, 10, 1}, rng);
  DefenseConfig dcfg = DefenseConfig::defaults_for(x.shape());
  dcfg.seed = 31;
  AttackConfig cfg = AttackConfig::from_pixel_scale(16.0, 2.0, 8);
  cfg.eot_samples = 1;

  const AttackResult via_eot = eot_pgd(model, make_gracias_defense(dcfg), x, 2, cfg);
  const AttackResult via_bpda = bpda_attack(model, make_gracias_defense(dcfg), x, 2, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(via_eot.adversarial[i] == via_bpda.adversarial[i]);
  }
  CHECK(via_eot.linf <= cfg.eps + 1e-12);
}

TEST_CASE("attack success rate is non-decreasing in the budget") {
  const ClassifierParams model = tiny_trained_model(Arch::Linear, 94);
  const Dataset data = gen_synthetic(3, 180, 10, 940);
  const double budgets[3] = {2.0, 8.0, 24.0};
  double rates[3];
  for (int b = 0; b < 3; ++b) {
    std::size_t flips = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const AttackResult res = fgsm(model, data.images[i], data.labels[i], budgets[b] / 255.0);
      flips += res.success;
    }
    rates[b] = static_cast<double>(flips) / static_cast<double>(data.size());
  }
  CHECK(rates[0] <= rates[1] + 1e-12);
  CHECK(rates[1] <= rates[2] + 1e-12);
}

TEST_CASE("config validation") {
  AttackConfig bad;
  bad.eps = 0.01;
  bad.eps_step = 0.02;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  AttackConfig zero_iters;
  zero_iters.iters = 0;
  CHECK_THROWS_AS(zero_iters.validate(), std::invalid_argument);
}
