#include "gracias/grassmann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gracias/conv.hpp"
#include "gracias/linalg.hpp"

namespace gracias {

namespace {

constexpr double kHalfPi = 1.5707963267948966;

Tensor centered_matrix(const ImageBank& bank) {
  const std::size_t n = bank.matrix.dim(0), k = bank.matrix.dim(1);
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = bank.matrix.data() + i * k;
    double* dst = out.data() + i * k;
    double mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean += src[j];
    mean /= static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) dst[j] = src[j] - mean;
  }
  return out;
}

// Rank decisions inside the bound machinery use a looser tolerance than the
// generic 1e-12: singular values below sqrt(machine eps) * sigma_max are not
// resolvable through the k x k Gram route, and image banks built from s x s
// kernels are structurally rank <= s^2 (every filtered copy is a combination
// of the s^2 shifted images), so trailing values are exact zeros plus noise.
constexpr double kBankRankRelTol = 1e-7;

std::size_t effective_rank(const Tensor& singular_values) {
  std::size_t rank = 0;
  const double tol = kBankRankRelTol * singular_values[0];
  while (rank < singular_values.size() && singular_values[rank] > tol) ++rank;
  return rank;
}

void check_pair(const GrassmannPoint& a, const GrassmannPoint& b) {
  if (a.ambient_dim() != b.ambient_dim()) {
    throw std::invalid_argument("grassmann: ambient dimension mismatch");
  }
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("grassmann: subspace dimension mismatch (" +
                                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

}  // namespace

GrassmannPoint grassmann_from_bank(const ImageBank& bank, std::size_t d, bool centered) {
  if (d == 0) throw std::invalid_argument("grassmann_from_bank: d must be positive");
  const Tensor m = centered ? centered_matrix(bank) : bank.matrix;
  const SvdResult svd = thin_svd(m);
  if (d > svd.rank) {
    throw std::invalid_argument("grassmann_from_bank: d = " + std::to_string(d) +
                                " exceeds numerical rank " + std::to_string(svd.rank));
  }
  GrassmannPoint p{Tensor({m.dim(0), d})};
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < d; ++j) p.basis(i, j) = svd.U(i, j);
  return p;
}

Tensor principal_angles(const GrassmannPoint& a, const GrassmannPoint& b) {
  check_pair(a, b);
  const std::size_t n = a.ambient_dim(), d = a.dim();

  const Tensor m = matmul(transpose(a.basis), b.basis);  // [d,d]
  const SvdResult cos_svd = thin_svd(m);                 // cosines descending

  // Residual (I - A Aᵀ) B computed as B - A (AᵀB); singular values are the
  // sines, descending, i.e. aligned with angles in descending order.
  Tensor residual = b.basis;
  const Tensor am = matmul(a.basis, m);  // [n,d]
  for (std::size_t i = 0; i < n * d; ++i) residual[i] -= am[i];
  const SvdResult sin_svd = thin_svd(residual);

  Tensor angles({d});
  for (std::size_t i = 0; i < d; ++i) {
    const double c = std::clamp(cos_svd.S[i], 0.0, 1.0);
    const double s = std::clamp(sin_svd.S[d - 1 - i], 0.0, 1.0);
    angles[i] = (c * c >= 0.5) ? std::asin(s) : std::acos(c);
  }
  // Ascending; route crossover can leave neighbours out of order by roundoff.
  std::sort(angles.values().begin(), angles.values().end());
  return angles;
}

double geodesic_distance(const GrassmannPoint& a, const GrassmannPoint& b) {
  const Tensor angles = principal_angles(a, b);
  double acc = 0.0;
  for (double t : angles.values()) acc += t * t;
  return std::sqrt(acc);
}

double normalized_geodesic(const GrassmannPoint& a, const GrassmannPoint& b) {
  check_pair(a, b);
  const std::size_t d = a.dim();
  if (2 * d > a.ambient_dim()) {
    throw std::invalid_argument("normalized_geodesic: requires 2d <= N, got d = " +
                                std::to_string(d) + ", N = " + std::to_string(a.ambient_dim()));
  }
  const double diameter = kHalfPi * std::sqrt(static_cast<double>(d));
  return geodesic_distance(a, b) / diameter;
}

Tensor bttb_matrix(const Tensor& kernel, std::size_t height, std::size_t width) {
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
    throw std::invalid_argument("bttb_matrix: odd square kernel required");
  }
  if (height * width > 4096) {
    throw std::invalid_argument("bttb_matrix: H*W = " + std::to_string(height * width) +
                                " exceeds the 4096 memory guard");
  }
  const long s = static_cast<long>(kernel.dim(0));
  const long c = s / 2;
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  const std::size_t n = height * width;
  Tensor m({n, n});
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      const std::size_t row = static_cast<std::size_t>(i * w + j);
      for (long a = 0; a < s; ++a) {
        const long p = i + a - c;
        if (p < 0 || p >= h) continue;
        for (long b = 0; b < s; ++b) {
          const long q = j + b - c;
          if (q < 0 || q >= w) continue;
          m(row, static_cast<std::size_t>(p * w + q)) = kernel(a, b);
        }
      }
    }
  }
  return m;
}

double sigma_min(const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) < m.dim(1)) {
    throw std::invalid_argument("sigma_min: need rows >= cols, got " + shape_string(m.shape()));
  }
  const SvdResult svd = thin_svd(m);
  const double smallest = svd.S[m.dim(1) - 1];
  return (smallest <= kRankRelTol * svd.S[0]) ? 0.0 : smallest;
}

double conv_spectral_norm(const Tensor& kernel, std::size_t height, std::size_t width) {
  const Tensor flipped = flip2(kernel);
  Tensor x({height, width, 1});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  double nx = norm2(x);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] /= nx;

  double lambda = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    const Tensor y = conv2d_same(conv2d_same(x, kernel), flipped);  // HᵀH x
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    const double prev = lambda;
    lambda = ny;  // Rayleigh quotient for unit x
    x = scale(y, 1.0 / ny);
    if (iter > 0 && std::abs(lambda - prev) <= 1e-13 * lambda) break;
  }
  return std::sqrt(lambda);
}

BoundTerms bound_rhs(const ImageBank& clean_bank, const KernelBank& kernels, const Tensor& delta) {
  if (clean_bank.columns() != kernels.kernels.size()) {
    throw std::invalid_argument("bound_rhs: bank has " + std::to_string(clean_bank.columns()) +
                                " columns but " + std::to_string(kernels.kernels.size()) +
                                " kernels were given");
  }
  if (delta.shape() != clean_bank.source_shape) {
    throw std::invalid_argument("bound_rhs: delta shape does not match the bank source shape");
  }

  BoundTerms terms;
  // ||X†||_2 = 1 / (smallest singular value above the rank tolerance); banks
  // with more kernels than kernel taps are structurally rank-deficient, so
  // the trailing exact zeros must not be mistaken for sigma_min.
  const SvdResult svd = thin_svd(clean_bank.matrix);
  const std::size_t rank = effective_rank(svd.S);
  terms.sigma_min = (rank == 0) ? 0.0 : svd.S[rank - 1];
  terms.delta_norm_sq = dot(delta, delta);
  const std::size_t h = clean_bank.source_shape[0], w = clean_bank.source_shape[1];
  for (const Tensor& kernel : kernels.kernels) {
    const double hn = conv_spectral_norm(kernel, h, w);
    terms.sum_hnorm_sq += hn * hn;
  }
  if (terms.sigma_min == 0.0) {
    terms.degenerate = true;
    terms.rhs_squared = std::numeric_limits<double>::infinity();
    terms.rhs_unsquared = std::numeric_limits<double>::infinity();
    return terms;
  }
  const double product = terms.sum_hnorm_sq * terms.delta_norm_sq;
  terms.rhs_squared = product / (terms.sigma_min * terms.sigma_min);
  terms.rhs_unsquared = product / terms.sigma_min;
  return terms;
}

BoundReport verify_bound(std::size_t trials, const BoundGeometry& geometry, double eps,
                         Xoshiro256ss& rng) {
  if (geometry.kernel_size % 2 == 0 || geometry.kernel_size == 0) {
    throw std::invalid_argument("verify_bound: kernel size must be odd");
  }
  BoundReport report;
  report.trials = trials;
  report.rhs_squared_min = std::numeric_limits<double>::infinity();
  report.rhs_unsquared_min = std::numeric_limits<double>::infinity();
  report.min_margin_squared = std::numeric_limits<double>::infinity();

  const std::size_t h = geometry.height, w = geometry.width, c = geometry.channels;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Tensor clean({h, w, c});
    for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = rng.uniform01();
    Tensor delta({h, w, c});
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = rng.uniform(-eps, eps);
    const Tensor perturbed = add(clean, delta);

    KernelBank kernels;
    kernels.kernels.reserve(geometry.k);
    for (std::size_t i = 0; i < geometry.k; ++i) {
      kernels.kernels.push_back(sample_kernel(geometry.kernel_size, rng));
    }
    const ImageBank clean_bank = bank_from_kernels(clean, kernels);
    const ImageBank pert_bank = bank_from_kernels(perturbed, kernels);

    const SvdResult clean_svd = thin_svd(clean_bank.matrix);
    const SvdResult pert_svd = thin_svd(pert_bank.matrix);
    const std::size_t d = std::min(effective_rank(clean_svd.S), effective_rank(pert_svd.S));
    const BoundTerms terms = bound_rhs(clean_bank, kernels, delta);
    if (d == 0 || terms.degenerate) {
      ++report.degenerate;
      continue;
    }

    GrassmannPoint pc{Tensor({clean_bank.matrix.dim(0), d})};
    GrassmannPoint pp{Tensor({pert_bank.matrix.dim(0), d})};
    for (std::size_t i = 0; i < clean_bank.matrix.dim(0); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        pc.basis(i, j) = clean_svd.U(i, j);
        pp.basis(i, j) = pert_svd.U(i, j);
      }
    }
    const double dng = normalized_geodesic(pc, pp);
    const double lhs = dng * dng;

    ++report.evaluated;
    report.lhs_mean += lhs;
    report.lhs_max = std::max(report.lhs_max, lhs);
    report.rhs_squared_mean += terms.rhs_squared;
    report.rhs_squared_min = std::min(report.rhs_squared_min, terms.rhs_squared);
    report.rhs_unsquared_min = std::min(report.rhs_unsquared_min, terms.rhs_unsquared);
    report.min_margin_squared = std::min(report.min_margin_squared, terms.rhs_squared - lhs);
    // lhs lives in [0,1]; the slack only absorbs angle roundoff (~1e-16^2)
    // when delta == 0 makes the rhs exactly zero.
    constexpr double slack = 1e-10;
    if (lhs > terms.rhs_squared + slack) ++report.violations_squared;
    if (lhs > terms.rhs_unsquared + slack) ++report.violations_unsquared;
  }

  if (report.evaluated > 0) {
    report.lhs_mean /= static_cast<double>(report.evaluated);
    report.rhs_squared_mean /= static_cast<double>(report.evaluated);
  } else {
    report.rhs_squared_min = 0.0;
    report.rhs_unsquared_min = 0.0;
    report.min_margin_squared = 0.0;
  }
  return report;
}

}  // namespace gracias
