#include "gracias/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gracias {

namespace {

double off_diagonal_norm(const Tensor& a) {
  const std::size_t n = a.dim(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

// Deterministic sign convention: the entry of largest magnitude is positive.
void canonicalize_columns(Tensor& v) {
  const std::size_t n = v.dim(0), k = v.dim(1);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::abs(v(i, j));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (v(arg, j) < 0.0) {
      for (std::size_t i = 0; i < n; ++i) v(i, j) = -v(i, j);
    }
  }
}

}  // namespace

EigenResult sym_eig(const Tensor& input) {
  if (input.rank() != 2 || input.dim(0) != input.dim(1)) {
    throw std::invalid_argument("sym_eig: square matrix required, got " + shape_string(input.shape()));
  }
  const std::size_t n = input.dim(0);

  double fro = 0.0;
  for (double v : input.values()) fro += v * v;
  fro = std::sqrt(fro);
  const double sym_tol = 1e-10 * std::max(1.0, fro);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > sym_tol) {
        throw std::invalid_argument("sym_eig: matrix is not symmetric");
      }
    }
  }

  Tensor a = input;
  // Symmetrize exactly so roundoff asymmetry cannot drift through sweeps.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = a(j, i) = m;
    }
  }
  Tensor v = Tensor::identity(n);

  const double target = 1e-12 * fro;
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps && off_diagonal_norm(a) > target; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double g = 100.0 * std::abs(apq);
        // Rotation would be an exact no-op at working precision.
        if (std::abs(a(p, p)) + g == std::abs(a(p, p)) && std::abs(a(q, q)) + g == std::abs(a(q, q))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        if (apq == 0.0) continue;

        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p), arq = a(r, q);
          a(r, p) = a(p, r) = arp - s * (arq + tau * arp);
          a(r, q) = a(q, r) = arq + s * (arp - tau * arq);
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenResult res{Tensor({n}), Tensor({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    res.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) res.vectors(i, j) = v(i, order[j]);
  }
  canonicalize_columns(res.vectors);
  return res;
}

SvdResult thin_svd(const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("thin_svd: rank-2 tensor required");
  const std::size_t n = m.dim(0), k = m.dim(1);
  if (n < k) {
    throw std::invalid_argument("thin_svd: need rows >= cols, got " + shape_string(m.shape()));
  }

  const EigenResult eig = sym_eig(gram(m));
  SvdResult res{Tensor({n, k}), Tensor({k}), eig.vectors, 0};
  for (std::size_t i = 0; i < k; ++i) res.S[i] = std::sqrt(std::max(eig.values[i], 0.0));

  const double tol = kRankRelTol * res.S[0];
  while (res.rank < k && res.S[res.rank] > tol && res.S[res.rank] > 0.0) ++res.rank;

  // U = M V diag(1/S); iterate with V transposed so both factors stream
  // contiguously.
  const Tensor vt = transpose(res.V);
  for (std::size_t j = 0; j < res.rank; ++j) {
    const double inv = 1.0 / res.S[j];
    const double* vrow = vt.data() + j * k;
    for (std::size_t r = 0; r < n; ++r) {
      const double* row = m.data() + r * k;
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += row[c] * vrow[c];
      res.U(r, j) = acc * inv;
    }
  }
  return res;
}

double spectral_norm(const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("spectral_norm: rank-2 tensor required");
  const Tensor& tall = (m.dim(0) >= m.dim(1)) ? m : transpose(m);
  return thin_svd(tall).S[0];
}

}  // namespace gracias
