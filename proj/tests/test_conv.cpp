#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "gracias/conv.hpp"
#include "gracias/rng.hpp"

using namespace gracias;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Xoshiro256ss& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Direct nested-loop summation, written independently of conv2d_same.
Tensor conv_oracle(const Tensor& image, const Tensor& kernel) {
  const long h = static_cast<long>(image.dim(0)), w = static_cast<long>(image.dim(1));
  const long c = static_cast<long>(image.dim(2));
  const long s = static_cast<long>(kernel.dim(0)), half = s / 2;
  Tensor out({image.dim(0), image.dim(1), image.dim(2)});
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j)
      for (long ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (long a = 0; a < s; ++a)
          for (long b = 0; b < s; ++b) {
            const long ii = i + a - half, jj = j + b - half;
            if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
            acc += image(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj),
                         static_cast<std::size_t>(ch)) *
                   kernel(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
          }
        out(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(ch)) =
            acc;
      }
  return out;
}

}  // namespace

TEST_CASE("delta kernel is the identity") {
  Xoshiro256ss rng(1);
  const Tensor image = random_tensor({5, 5, 1}, rng, 0.0, 1.0);
  Tensor delta({3, 3});
  delta(1, 1) = 1.0;
  const Tensor out = conv2d_same(image, delta);
  for (std::size_t i = 0; i < image.size(); ++i) CHECK(out[i] == image[i]);
}

TEST_CASE("uniform kernel on a constant image shows the zero-padding arithmetic") {
  const Tensor image = Tensor::full({4, 4, 1}, 0.5);
  const Tensor kernel = Tensor::full({3, 3}, 1.0 / 9.0);
  const Tensor out = conv2d_same(image, kernel);
  // Interior pixels keep the constant; a corner sees only 4 of 9 taps.
  CHECK(out(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(2, 2, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(0, 0, 0) == doctest::Approx(0.5 * 4.0 / 9.0).epsilon(1e-12));
  CHECK(out(0, 3, 0) == doctest::Approx(0.5 * 4.0 / 9.0).epsilon(1e-12));
  CHECK(out(0, 1, 0) == doctest::Approx(0.5 * 6.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("matches the direct-summation oracle on random inputs") {
  Xoshiro256ss rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t s = (trial % 2 == 0) ? 3 : 5;
    const Tensor image = random_tensor({8, 8, trial % 3 == 0 ? std::size_t{3} : std::size_t{1}}, rng);
    const Tensor kernel = random_tensor({s, s}, rng);
    const Tensor got = conv2d_same(image, kernel);
    const Tensor want = conv_oracle(image, kernel);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("linearity in the image argument") {
  Xoshiro256ss rng(3);
  const Tensor x = random_tensor({7, 6, 2}, rng);
  const Tensor y = random_tensor({7, 6, 2}, rng);
  const Tensor h = random_tensor({3, 3}, rng);
  const double alpha = 0.37, beta = -1.91;

  Tensor combo({7, 6, 2});
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = alpha * x[i] + beta * y[i];
  const Tensor lhs = conv2d_same(combo, h);
  const Tensor cx = conv2d_same(x, h);
  const Tensor cy = conv2d_same(y, h);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs[i] == doctest::Approx(alpha * cx[i] + beta * cy[i]).epsilon(1e-12));
  }
}

TEST_CASE("rejects even kernels and kernels larger than the image") {
  const Tensor image = Tensor::full({4, 4, 1}, 0.1);
  CHECK_THROWS_AS((conv2d_same(image, Tensor::full({2, 2}, 0.25))), std::invalid_argument);
  CHECK_THROWS_AS((conv2d_same(image, Tensor::full({5, 5}, 0.04))), std::invalid_argument);
  CHECK_THROWS_AS((conv2d_same(Tensor::full({4, 4}, 0.1), Tensor::full({3, 3}, 0.1))),
                  std::invalid_argument);
}

TEST_CASE("pure: same inputs give bit-identical outputs") {
  Xoshiro256ss rng(4);
  const Tensor image = random_tensor({6, 6, 1}, rng);
  const Tensor kernel = random_tensor({3, 3}, rng);
  const Tensor a = conv2d_same(image, kernel);
  const Tensor b = conv2d_same(image, kernel);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
