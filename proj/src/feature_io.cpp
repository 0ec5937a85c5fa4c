#include "sqz/feature_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "feature format assumes a little-endian host");

namespace sqz {

namespace {
constexpr char kMagic[8] = {'S', 'Q', 'Z', 'F', 'E', 'A', 'T', '1'};
}

void write_features(const std::string& path, const Tensor& features) {
  if (features.ndim() != 2) {
    throw std::invalid_argument("write_features: need [T, F], got " +
                                shape_str(features.shape));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_features: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  const uint32_t t = static_cast<uint32_t>(features.dim(0));
  const uint32_t f = static_cast<uint32_t>(features.dim(1));
  os.write(reinterpret_cast<const char*>(&t), sizeof(t));
  os.write(reinterpret_cast<const char*>(&f), sizeof(f));
  os.write(reinterpret_cast<const char*>(features.data.data()),
           static_cast<std::streamsize>(features.data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write_features: write failed for " + path);
}

TensorPtr read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_features: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("read_features: bad magic in " + path);
  }
  uint32_t t = 0, f = 0;
  is.read(reinterpret_cast<char*>(&t), sizeof(t));
  is.read(reinterpret_cast<char*>(&f), sizeof(f));
  if (!is || t == 0 || f == 0) {
    throw std::runtime_error("read_features: bad header in " + path);
  }
  auto out = zeros({static_cast<int64_t>(t), static_cast<int64_t>(f)});
  is.read(reinterpret_cast<char*>(out->data.data()),
          static_cast<std::streamsize>(out->data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("read_features: truncated file " + path);
  return out;
}

}  // namespace sqz
