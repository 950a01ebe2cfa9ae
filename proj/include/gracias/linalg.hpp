#pragma once

#include "gracias/tensor.hpp"

namespace gracias {

struct EigenResult {
  Tensor values;   // [n], sorted descending
  Tensor vectors;  // [n,n], column i pairs with values[i]; orthonormal
};

// Symmetric eigendecomposition by cyclic Jacobi rotations (row-major pair
// order, fixed sweep schedule) iterated until the off-diagonal Frobenius norm
// drops below 1e-12 * ||A||_F. Rejects asymmetric input.
EigenResult sym_eig(const Tensor& a);

struct SvdResult {
  Tensor U;          // [N,k]; columns past `rank` are zero, not orthonormal
  Tensor S;          // [k], descending
  Tensor V;          // [k,k]
  std::size_t rank;  // singular values above 1e-12 * S_max
};

// Thin SVD of a tall matrix (N >= k) through the k x k Gram matrix MᵀM:
// eigendecompose the Gram matrix, take S = sqrt(eigenvalues) and
// U = M V diag(S)^-1 column by column. Costs O(N k^2) instead of O(N^2 k).
SvdResult thin_svd(const Tensor& m);

// Largest singular value (works for either orientation).
double spectral_norm(const Tensor& m);

constexpr double kRankRelTol = 1e-12;

}  // namespace gracias
