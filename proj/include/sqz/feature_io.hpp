#pragma once

#include <string>

#include "sqz/tensor.hpp"

namespace sqz {

// Raw feature file: 16-byte header (8-byte magic "SQZFEAT1", u32 T, u32 F,
// little-endian) followed by T*F float64 values, row-major.
void write_features(const std::string& path, const Tensor& features);
TensorPtr read_features(const std::string& path);

}  // namespace sqz
