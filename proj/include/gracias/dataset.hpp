#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gracias/model.hpp"
#include "gracias/tensor.hpp"

namespace gracias {

struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::string name;
  std::size_t class_count{0};

  std::size_t size() const { return images.size(); }
  Batch batch() const { return Batch{images, labels}; }
};

// IDX pair reader (big-endian magics 0x803 for images, 0x801 for labels).
// Pixels are scaled to [0,1]; grayscale images load as H x W x 1.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Class-conditional patterns with jittered position, amplitude and additive
// pixel noise: a smooth blob at a class-specific location plus a faint
// class-coded fine-grained texture. Linearly separable at low noise by
// construction.
Dataset gen_synthetic(std::size_t classes, std::size_t per_class, std::size_t image_size,
                      std::uint64_t seed, double noise = 0.04);

}  // namespace gracias
