#include "gracias/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "gracias/rng.hpp"

namespace gracias {

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error(path + ": truncated while reading " + what);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open IDX image file: " + images_path);
  const std::uint32_t img_magic = read_be_u32(img, images_path, "magic");
  if (img_magic != 0x00000803u) {
    throw std::runtime_error(images_path + ": bad IDX image magic (expected 0x00000803)");
  }
  const std::uint32_t count = read_be_u32(img, images_path, "image count");
  const std::uint32_t rows = read_be_u32(img, images_path, "row count");
  const std::uint32_t cols = read_be_u32(img, images_path, "column count");
  if (rows == 0 || cols == 0) throw std::runtime_error(images_path + ": zero image dimensions");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open IDX label file: " + labels_path);
  const std::uint32_t lab_magic = read_be_u32(lab, labels_path, "magic");
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error(labels_path + ": bad IDX label magic (expected 0x00000801)");
  }
  const std::uint32_t lab_count = read_be_u32(lab, labels_path, "label count");
  if (lab_count != count) {
    throw std::runtime_error("IDX count mismatch: " + std::to_string(count) + " images vs " +
                             std::to_string(lab_count) + " labels");
  }

  Dataset ds;
  ds.name = "idx";
  std::vector<unsigned char> pixel_buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(pixel_buf.data()),
                  static_cast<std::streamsize>(pixel_buf.size()))) {
      throw std::runtime_error(images_path + ": truncated pixel payload at image " + std::to_string(i));
    }
    Tensor t({rows, cols, 1});
    for (std::size_t p = 0; p < pixel_buf.size(); ++p) t[p] = pixel_buf[p] / 255.0;
    ds.images.push_back(std::move(t));

    unsigned char label;
    if (!lab.read(reinterpret_cast<char*>(&label), 1)) {
      throw std::runtime_error(labels_path + ": truncated label payload at index " + std::to_string(i));
    }
    ds.labels.push_back(label);
  }

  for (std::size_t y : ds.labels) ds.class_count = std::max(ds.class_count, y + 1);
  if (ds.class_count == 0) ds.class_count = 1;
  return ds;
}

Dataset gen_synthetic(std::size_t classes, std::size_t per_class, std::size_t image_size,
                      std::uint64_t seed, double noise) {
  if (classes < 2) throw std::invalid_argument("gen_synthetic: need at least two classes");
  if (image_size < 4) throw std::invalid_argument("gen_synthetic: image size too small");
  if (noise < 0.0 || noise > 0.5) throw std::invalid_argument("gen_synthetic: noise must lie in [0,0.5]");

  const double s = static_cast<double>(image_size);
  const double ring = s / 3.0;
  const double sigma = s / 3.5;
  const double background = 0.25;
  const double texture_amp = 0.06;
  const double two_pi = 6.283185307179586;

  // Class identity is carried at two spatial scales: a smooth blob at a
  // class-specific position (survives low-pass transforms) and a faint
  // fine-grained texture (removed by them). The texture patterns are fixed
  // per class index so train/eval splits built from different seeds agree.
  std::vector<Tensor> textures;
  for (std::size_t c = 0; c < classes; ++c) {
    Xoshiro256ss texture_rng(splitmix64(0x5349474EULL ^ c));
    Tensor t({image_size, image_size});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = texture_rng.uniform(-1.0, 1.0);
    textures.push_back(std::move(t));
  }

  Dataset ds;
  ds.name = "synthetic";
  ds.class_count = classes;
  Xoshiro256ss rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    const double phi = two_pi * static_cast<double>(c) / static_cast<double>(classes);
    const double cr = 0.5 * (s - 1.0) + ring * std::sin(phi);
    const double cc = 0.5 * (s - 1.0) + ring * std::cos(phi);
    for (std::size_t m = 0; m < per_class; ++m) {
      const double amp = rng.uniform(0.55, 0.80);
      const double jr = rng.uniform(-2.5, 2.5);
      const double jc = rng.uniform(-2.5, 2.5);
      Tensor img({image_size, image_size, 1});
      for (std::size_t i = 0; i < image_size; ++i) {
        for (std::size_t j = 0; j < image_size; ++j) {
          const double di = static_cast<double>(i) - (cr + jr);
          const double dj = static_cast<double>(j) - (cc + jc);
          const double blob = amp * std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
          const double value =
              background + blob + texture_amp * textures[c](i, j) + rng.uniform(-noise, noise);
          img(i, j, 0) = std::clamp(value, 0.0, 1.0);
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace gracias
