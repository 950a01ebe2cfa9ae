#include "gracias/conv.hpp"

#include <stdexcept>

namespace gracias {

Tensor conv2d_same(const Tensor& image, const Tensor& kernel) {
  if (image.rank() != 3) throw std::invalid_argument("conv2d_same: image must be H x W x C");
  if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1)) {
    throw std::invalid_argument("conv2d_same: kernel must be square, got " + shape_string(kernel.shape()));
  }
  const std::size_t s = kernel.dim(0);
  if (s % 2 == 0) throw std::invalid_argument("conv2d_same: kernel size must be odd, got " + std::to_string(s));
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (s > H || s > W) {
    throw std::invalid_argument("conv2d_same: kernel " + std::to_string(s) + "x" + std::to_string(s) +
                                " larger than image " + shape_string(image.shape()));
  }

  const long c = static_cast<long>(s) / 2;
  const long lh = static_cast<long>(H), lw = static_cast<long>(W), ls = static_cast<long>(s);
  const long lc = static_cast<long>(C);
  Tensor out({H, W, C});
  const double* img = image.data();
  double* dst = out.data();

  auto convolve_pixel = [&](long i, long j) {
    double* opix = dst + (i * lw + j) * lc;
    for (long a = 0; a < ls; ++a) {
      const long ii = i + a - c;
      if (ii < 0 || ii >= lh) continue;
      const double* krow = kernel.data() + a * ls;
      for (long b = 0; b < ls; ++b) {
        const long jj = j + b - c;
        if (jj < 0 || jj >= lw) continue;
        const double w = krow[b];
        const double* ipix = img + (ii * lw + jj) * lc;
        for (long ch = 0; ch < lc; ++ch) opix[ch] += w * ipix[ch];
      }
    }
  };

  // Border rows/columns take the bounds-checked path; the interior skips all
  // range tests.
  for (long i = 0; i < lh; ++i) {
    const bool row_interior = (i >= c && i < lh - c);
    for (long j = 0; j < lw; ++j) {
      if (!row_interior || j < c || j >= lw - c) {
        convolve_pixel(i, j);
        continue;
      }
      double* opix = dst + (i * lw + j) * lc;
      const double* base = img + ((i - c) * lw + (j - c)) * lc;
      const double* krow = kernel.data();
      for (long a = 0; a < ls; ++a, krow += ls) {
        const double* irow = base + a * lw * lc;
        for (long b = 0; b < ls; ++b) {
          const double w = krow[b];
          const double* ipix = irow + b * lc;
          for (long ch = 0; ch < lc; ++ch) opix[ch] += w * ipix[ch];
        }
      }
    }
  }
  return out;
}

Tensor flip2(const Tensor& kernel) {
  if (kernel.rank() != 2) throw std::invalid_argument("flip2: rank-2 tensor required");
  const std::size_t r = kernel.dim(0), c = kernel.dim(1);
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = kernel(r - 1 - i, c - 1 - j);
  return out;
}

}  // namespace gracias
