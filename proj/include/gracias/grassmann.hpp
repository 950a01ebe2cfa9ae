#pragma once

#include <cstdint>

#include "gracias/defense.hpp"
#include "gracias/rng.hpp"
#include "gracias/tensor.hpp"

namespace gracias {

struct GrassmannPoint {
  Tensor basis;  // [N,d], orthonormal columns
  std::size_t ambient_dim() const { return basis.dim(0); }
  std::size_t dim() const { return basis.dim(1); }
};

// Leading d left singular directions of the (optionally centered) bank.
GrassmannPoint grassmann_from_bank(const ImageBank& bank, std::size_t d, bool centered);

// Canonical angles between two equal-dimension subspaces, ascending in
// [0, pi/2]. Small angles come from the sine route sigma((I-AAᵀ)B), large ones
// from the cosine route sigma(AᵀB), so both ends keep full precision.
Tensor principal_angles(const GrassmannPoint& a, const GrassmannPoint& b);

// sqrt(sum of squared principal angles).
double geodesic_distance(const GrassmannPoint& a, const GrassmannPoint& b);

// Geodesic distance over the diameter (pi/2)*sqrt(d); needs 2d <= N so that
// fully orthogonal subspaces exist and the maximum is attainable.
double normalized_geodesic(const GrassmannPoint& a, const GrassmannPoint& b);

// Explicit convolution matrix: H vec(x) = vec(conv2d_same(x, kernel)) for
// single-channel H x W images. Block Toeplitz with Toeplitz blocks.
// Capped at H*W <= 4096 as a memory guard.
Tensor bttb_matrix(const Tensor& kernel, std::size_t height, std::size_t width);

// Smallest singular value, zero when below the rank tolerance.
double sigma_min(const Tensor& m);

// Spectral norm of the convolution operator, computed matrix-free by power
// iteration on HᵀH (one forward and one adjoint convolution per step).
double conv_spectral_norm(const Tensor& kernel, std::size_t height, std::size_t width);

struct BoundTerms {
  double rhs_squared{0.0};  // (1/sigma_min^2) * sum ||H_i||^2 * ||delta||^2
  double rhs_unsquared{0.0};    // variant with an unsquared 1/sigma_min
  double sigma_min{0.0};    // 1/||X†||_2: smallest singular value above the
                            // bank rank tolerance (banks with k > s^2 kernels
                            // are structurally rank-deficient, trailing
                            // singular values are exact zeros)
  double sum_hnorm_sq{0.0};
  double delta_norm_sq{0.0};
  bool degenerate{false};   // bank had rank zero; both bounds are +inf
};

// Right-hand side of the subspace-proximity bound for a clean bank, its
// kernels, and a perturbation delta.
BoundTerms bound_rhs(const ImageBank& clean_bank, const KernelBank& kernels, const Tensor& delta);

struct BoundGeometry {
  std::size_t height{8};
  std::size_t width{8};
  std::size_t channels{1};
  std::size_t k{12};
  std::size_t kernel_size{3};
};

struct BoundReport {
  std::size_t trials{0};
  std::size_t evaluated{0};
  std::size_t degenerate{0};
  std::size_t violations_squared{0};
  std::size_t violations_unsquared{0};
  double lhs_mean{0.0};
  double lhs_max{0.0};
  double rhs_squared_mean{0.0};
  double rhs_squared_min{0.0};
  double rhs_unsquared_min{0.0};
  double min_margin_squared{0.0};  // min over trials of rhs_squared - lhs
};

// Samples random image/perturbation/kernel triples and checks the proximity
// bound trial by trial: lhs = d_ng^2 of the uncentered clean and perturbed
// column spans at matched dimension, rhs from bound_rhs.
BoundReport verify_bound(std::size_t trials, const BoundGeometry& geometry, double eps,
                         Xoshiro256ss& rng);

}  // namespace gracias
