#include "gracias/defense.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "gracias/conv.hpp"
#include "gracias/linalg.hpp"

namespace gracias {

void DefenseConfig::validate() const {
  if (k_min < 1 || k_min > k_max) throw std::invalid_argument("defense config: need 1 <= k_min <= k_max");
  if (!(var_min > 0.0) || var_min > var_max || var_max > 1.0) {
    throw std::invalid_argument("defense config: need 0 < var_min <= var_max <= 1");
  }
  if (kernel_size % 2 == 0 || kernel_size == 0) {
    throw std::invalid_argument("defense config: kernel_size must be odd");
  }
}

DefenseConfig DefenseConfig::defaults_for(const std::vector<std::size_t>& image_shape) {
  DefenseConfig c;
  if (image_shape.size() >= 2 && std::min(image_shape[0], image_shape[1]) < 32) c.kernel_size = 3;
  return c;
}

Tensor sample_kernel(std::size_t size, Xoshiro256ss& rng) {
  if (size % 2 == 0 || size == 0) {
    throw std::invalid_argument("sample_kernel: size must be odd, got " + std::to_string(size));
  }
  Tensor k({size, size});
  double l1 = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    k[i] = rng.uniform01();
    l1 += k[i];
  }
  if (l1 == 0.0) return Tensor::full({size, size}, 1.0 / static_cast<double>(size * size));
  for (std::size_t i = 0; i < k.size(); ++i) k[i] /= l1;
  return k;
}

ImageBank bank_from_kernels(const Tensor& x, const KernelBank& kernels) {
  if (x.rank() != 3) throw std::invalid_argument("bank: image must be H x W x C");
  if (kernels.kernels.empty()) throw std::invalid_argument("bank: at least one kernel required");
  const std::size_t n = x.size();
  const std::size_t k = kernels.kernels.size();
  ImageBank bank{Tensor({n, k}), x.shape()};
  for (std::size_t j = 0; j < k; ++j) {
    const Tensor filtered = conv2d_same(x, kernels.kernels[j]);
    for (std::size_t i = 0; i < n; ++i) bank.matrix(i, j) = filtered[i];
  }
  return bank;
}

std::pair<KernelBank, ImageBank> build_bank(const Tensor& x, const DefenseConfig& config,
                                            Xoshiro256ss& rng) {
  config.validate();
  if (x.rank() != 3) throw std::invalid_argument("build_bank: image must be H x W x C");
  if (config.kernel_size > x.dim(0) || config.kernel_size > x.dim(1)) {
    throw std::invalid_argument("build_bank: image " + shape_string(x.shape()) +
                                " smaller than kernel size " + std::to_string(config.kernel_size));
  }
  const std::size_t k = rng.uniform_int(config.k_min, config.k_max);
  KernelBank kernels;
  kernels.kernels.reserve(k);
  for (std::size_t i = 0; i < k; ++i) kernels.kernels.push_back(sample_kernel(config.kernel_size, rng));
  ImageBank bank = bank_from_kernels(x, kernels);
  return {std::move(kernels), std::move(bank)};
}

Subspace estimate_subspace(const ImageBank& bank, double variance_fraction) {
  if (!(variance_fraction > 0.0) || variance_fraction > 1.0) {
    throw std::invalid_argument("estimate_subspace: variance_fraction must lie in (0,1]");
  }
  const std::size_t n = bank.matrix.dim(0), k = bank.matrix.dim(1);

  Tensor mean({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = bank.matrix.data() + i * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j];
    mean[i] = acc / static_cast<double>(k);
  }

  Tensor centered({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = bank.matrix.data() + i * k;
    double* dst = centered.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) dst[j] = src[j] - mean[i];
  }

  const double bank_scale = std::max(norm2(bank.matrix), 1.0);
  if (norm2(centered) <= 1e-12 * bank_scale) {
    // All columns identical: fall back to the mean direction when it exists.
    const double mean_norm = norm2(mean);
    if (mean_norm <= 1e-12 * bank_scale) throw DegenerateBankError("degenerate bank");
    Subspace sub{mean, Tensor({n, 1}), Tensor({1}), bank.source_shape};
    for (std::size_t i = 0; i < n; ++i) sub.basis(i, 0) = mean[i] / mean_norm;
    return sub;
  }

  // Same Gram route as thin_svd, but only the d retained left singular
  // vectors are ever formed (k-column banks routinely keep a third of them).
  const EigenResult eig = sym_eig(gram(centered));
  Tensor singular({k});
  for (std::size_t i = 0; i < k; ++i) singular[i] = std::sqrt(std::max(eig.values[i], 0.0));
  std::size_t rank = 0;
  const double tol = kRankRelTol * singular[0];
  while (rank < k && singular[rank] > tol && singular[rank] > 0.0) ++rank;
  if (rank == 0) throw DegenerateBankError("degenerate bank");

  double total = 0.0;
  for (std::size_t i = 0; i < rank; ++i) total += singular[i] * singular[i];
  std::size_t d = 1;
  if (variance_fraction >= 1.0) {
    d = rank;
  } else {
    double running = singular[0] * singular[0];
    while (d < rank && running / total < variance_fraction) {
      running += singular[d] * singular[d];
      ++d;
    }
  }

  Subspace sub{std::move(mean), Tensor({n, d}), Tensor({d}), bank.source_shape};
  const Tensor vt = transpose(eig.vectors);
  for (std::size_t j = 0; j < d; ++j) {
    sub.spectrum[j] = singular[j];
    const double inv = 1.0 / singular[j];
    const double* vrow = vt.data() + j * k;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = centered.data() + i * k;
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += row[c] * vrow[c];
      sub.basis(i, j) = acc * inv;
    }
  }
  return sub;
}

Tensor project_reconstruct(const Tensor& x, const Subspace& sub) {
  if (x.shape() != sub.source_shape) {
    throw std::invalid_argument("project_reconstruct: image shape " + shape_string(x.shape()) +
                                " does not match subspace source shape " +
                                shape_string(sub.source_shape));
  }
  const std::size_t n = sub.mean.size(), d = sub.dim();

  Tensor residual({n});
  for (std::size_t i = 0; i < n; ++i) residual[i] = x[i] - sub.mean[i];

  Tensor coords({d});
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += sub.basis(i, j) * residual[i];
    coords[j] = acc;
  }

  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = sub.mean[i];
  for (std::size_t j = 0; j < d; ++j) {
    const double cj = coords[j];
    for (std::size_t i = 0; i < n; ++i) out[i] += sub.basis(i, j) * cj;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out.reshaped(x.shape());
}

Tensor gracias_defend(const Tensor& x, const DefenseConfig& config, Xoshiro256ss& rng,
                      DefenseStats* stats) {
  config.validate();
  for (double v : x.values()) {
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("gracias_defend: image values must lie in [0,1]");
  }
  const double fraction = rng.uniform(config.var_min, config.var_max);
  auto [kernels, bank] = build_bank(x, config, rng);
  if (stats != nullptr) *stats = DefenseStats{false, kernels.kernels.size(), 0, fraction};
  try {
    const Subspace sub = estimate_subspace(bank, fraction);
    if (stats != nullptr) stats->d = sub.dim();
    return project_reconstruct(x, sub);
  } catch (const DegenerateBankError&) {
    if (stats != nullptr) stats->degenerate = true;
    return x;
  }
}

Tensor bitdepth_reduce(const Tensor& x, int bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bitdepth_reduce: bits must lie in [1,8]");
  const double levels = static_cast<double>((1 << bits) - 1);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(out[i] * levels) / levels;
  return out;
}

DefenseFn make_identity_defense() {
  return [](const Tensor& x) { return x; };
}

DefenseFn make_gracias_defense(const DefenseConfig& config) {
  config.validate();
  auto rng = std::make_shared<Xoshiro256ss>(config.seed);
  return [config, rng](const Tensor& x) { return gracias_defend(x, config, *rng); };
}

DefenseFn make_bitdepth_defense(int bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bitdepth defense: bits must lie in [1,8]");
  return [bits](const Tensor& x) { return bitdepth_reduce(x, bits); };
}

DefenseFn chain(std::vector<DefenseFn> stages) {
  if (stages.empty()) throw std::invalid_argument("chain: at least one defense required");
  return [stages = std::move(stages)](const Tensor& x) {
    Tensor out = x;
    for (const auto& stage : stages) out = stage(out);
    return out;
  };
}

}  // namespace gracias
