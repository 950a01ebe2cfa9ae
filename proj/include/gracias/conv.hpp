#pragma once

#include "gracias/tensor.hpp"

namespace gracias {

// 2-D correlation with an odd square kernel, zero boundary, output size equal
// to the input. The kernel is applied identically to every channel:
//   out[i,j,c] = sum_{a,b} image[i+a-s/2, j+b-s/2, c] * kernel[a,b]
// with out-of-range image reads taken as zero.
Tensor conv2d_same(const Tensor& image, const Tensor& kernel);

// Kernel flipped in both axes; conv2d_same with the flipped kernel is the
// adjoint of conv2d_same with the original one.
Tensor flip2(const Tensor& kernel);

}  // namespace gracias
