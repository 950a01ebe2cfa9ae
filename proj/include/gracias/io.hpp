#pragma once

#include <string>

#include "gracias/tensor.hpp"

namespace gracias {

// GRCT tensor container: magic "GRCT", u32 version, u8 rank, u32 dims[rank],
// payload of little-endian float64, row-major. Bit-exact round trip.
void write_grct(const Tensor& t, const std::string& path);
Tensor read_grct(const std::string& path);

}  // namespace gracias
