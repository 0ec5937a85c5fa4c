#pragma once

#include <string>

#include "sqz/model.hpp"

namespace sqz {

// Versioned binary checkpoint: an 8-byte magic ("SQZFCKPT"), a u32 format
// version, the JSON config echo, then every parameter and running buffer as
// (name, shape, raw little-endian f64 values). Loading rebuilds the model
// from the echoed config and fills entries by name, strictly.
void save_checkpoint(const std::string& path, const EncoderModel& model);
EncoderModel load_checkpoint(const std::string& path);

}  // namespace sqz
