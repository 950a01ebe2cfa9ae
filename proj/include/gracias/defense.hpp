#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "gracias/rng.hpp"
#include "gracias/tensor.hpp"

namespace gracias {

struct DefenseConfig {
  std::size_t k_min{10};
  std::size_t k_max{60};
  std::size_t kernel_size{7};
  double var_min{0.60};
  double var_max{0.95};
  std::uint64_t seed{0};

  void validate() const;
  // Default filter size drops to 3 for images smaller than 32 pixels.
  static DefenseConfig defaults_for(const std::vector<std::size_t>& image_shape);
};

struct KernelBank {
  std::vector<Tensor> kernels;  // each s x s, non-negative, unit l1 norm
};

struct ImageBank {
  Tensor matrix;                          // [N,k], column i = vec(x * h_i)
  std::vector<std::size_t> source_shape;  // (H,W,C), N = H*W*C
  std::size_t columns() const { return matrix.dim(1); }
};

struct Subspace {
  Tensor mean;                            // [N]
  Tensor basis;                           // [N,d], orthonormal columns
  Tensor spectrum;                        // [d], retained singular values
  std::vector<std::size_t> source_shape;  // (H,W,C)
  std::size_t dim() const { return basis.dim(1); }
};

// Mean-centered bank has no usable direction at all (e.g. all-zero image).
struct DegenerateBankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Random filter with i.i.d. uniform [0,1] weights scaled to unit l1 norm.
Tensor sample_kernel(std::size_t size, Xoshiro256ss& rng);

// Draws k uniformly from {k_min..k_max}, samples k kernels, stacks the
// vectorized filtered images as columns.
std::pair<KernelBank, ImageBank> build_bank(const Tensor& x, const DefenseConfig& config,
                                            Xoshiro256ss& rng);

// Same stacking with caller-provided kernels (shared-kernel comparisons).
ImageBank bank_from_kernels(const Tensor& x, const KernelBank& kernels);

// PCA of the mean-centered bank; keeps the smallest d whose cumulative
// squared-singular-value share reaches variance_fraction.
Subspace estimate_subspace(const ImageBank& bank, double variance_fraction);

// mean + B Bᵀ (vec(x) - mean), clamped to [0,1] and reshaped.
Tensor project_reconstruct(const Tensor& x, const Subspace& sub);

struct DefenseStats {
  bool degenerate{false};  // bank had no usable direction; input passed through
  std::size_t k{0};
  std::size_t d{0};
  double variance_fraction{0.0};
};

// The full randomized pipeline: variance draw, filter bank, subspace fit,
// projection back to image space.
Tensor gracias_defend(const Tensor& x, const DefenseConfig& config, Xoshiro256ss& rng,
                      DefenseStats* stats = nullptr);

// Pixel quantization to 2^bits levels.
Tensor bitdepth_reduce(const Tensor& x, int bits);

// Image-to-image transform; randomized defenses carry their own stream and
// draw fresh randomness on every call.
using DefenseFn = std::function<Tensor(const Tensor&)>;

DefenseFn make_identity_defense();
DefenseFn make_gracias_defense(const DefenseConfig& config);  // stream seeded from config.seed
DefenseFn make_bitdepth_defense(int bits);
DefenseFn chain(std::vector<DefenseFn> stages);  // left-to-right composition

}  // namespace gracias
