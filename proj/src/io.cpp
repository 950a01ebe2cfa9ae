#include "gracias/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "GRCT payload layout assumes a little-endian host");

namespace gracias {

namespace {

constexpr char kMagic[4] = {'G', 'R', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_grct(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t d : t.shape()) {
    const std::uint32_t dim = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&dim), 4);
  }
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw std::runtime_error("GRCT write failed: " + path);
}

Tensor read_grct(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open GRCT file: " + path);

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a GRCT file (bad magic)");
  }
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), 4) || version != kVersion) {
    throw std::runtime_error(path + ": unsupported GRCT version");
  }
  std::uint8_t rank = 0;
  if (!in.read(reinterpret_cast<char*>(&rank), 1) || rank == 0) {
    throw std::runtime_error(path + ": bad GRCT rank");
  }
  std::vector<std::size_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t dim = 0;
    if (!in.read(reinterpret_cast<char*>(&dim), 4) || dim == 0) {
      throw std::runtime_error(path + ": bad GRCT dimension");
    }
    shape[i] = dim;
  }

  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> data(n);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw std::runtime_error(path + ": truncated GRCT payload");
  }
  char extra;
  if (in.read(&extra, 1)) throw std::runtime_error(path + ": trailing bytes after GRCT payload");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace gracias
