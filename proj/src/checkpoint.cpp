#include "sqz/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "sqz/config_json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace sqz {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'Z', 'F', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<uint32_t>(t.shape.size()));
  for (int64_t d : t.shape) write_u64(os, static_cast<uint64_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u32(os, 0);  // reserved
  const std::string cfg = config_to_json(model.config);
  write_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  const auto params = model.named_parameters();
  const auto buffers = model.named_buffers();
  write_u64(os, params.size() + buffers.size());
  for (const auto& [name, t] : params) write_entry(os, name, *t);
  for (const auto& [name, t] : buffers) write_entry(os, name, *t);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

EncoderModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  read_u32(is);  // reserved
  const uint64_t cfg_len = read_u64(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));

  EncoderModel model = build(config_from_json(cfg), /*seed=*/0);

  std::map<std::string, TensorPtr> slots;
  for (const auto& [name, t] : model.named_parameters()) slots[name] = t;
  for (const auto& [name, t] : model.named_buffers()) slots[name] = t;

  const uint64_t count = read_u64(is);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_u32(is);
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(is));
    const int64_t n = shape_numel(shape);
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw std::runtime_error("checkpoint: unexpected entry '" + name + "'");
    }
    if (it->second->shape != shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name +
                               "': file " + shape_str(shape) + " vs model " +
                               shape_str(it->second->shape));
    }
    is.read(reinterpret_cast<char*>(it->second->data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    slots.erase(it);
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  if (!slots.empty()) {
    throw std::runtime_error("checkpoint: missing entry '" +
                             slots.begin()->first + "'");
  }
  return model;
}

}  // namespace sqz
