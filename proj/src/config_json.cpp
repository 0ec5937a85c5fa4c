#include "sqz/config_json.hpp"

#include <json.hpp>

namespace sqz {

using nlohmann::json;

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["num_blocks"] = c.num_blocks;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["conv_kernel"] = c.conv_kernel;
  j["ffn_expansion"] = c.ffn_expansion;
  j["block_structure"] = to_string(c.block_structure);
  j["norm_scheme"] = to_string(c.norm_scheme);
  j["conv_activation"] = to_string(c.conv_activation);
  j["positional"] = to_string(c.positional);
  j["unet"] = c.unet;
  j["downsample_after_block"] = c.downsample_after_block;
  j["subsampling"] = to_string(c.subsampling);
  j["input_feature_dim"] = c.input_feature_dim;
  j["vocab_size"] = c.vocab_size;
  j["dropout_rate"] = c.dropout_rate;
  j["attention_dropout_rate"] = c.attention_dropout_rate;
  return j.dump(2);
}

ModelConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");

  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "num_blocks") {
        c.num_blocks = value.get<int64_t>();
      } else if (key == "dim") {
        c.dim = value.get<int64_t>();
      } else if (key == "heads") {
        c.heads = value.get<int64_t>();
      } else if (key == "conv_kernel") {
        c.conv_kernel = value.get<int64_t>();
      } else if (key == "ffn_expansion") {
        c.ffn_expansion = value.get<int64_t>();
      } else if (key == "block_structure") {
        c.block_structure =
            block_structure_from_string(value.get<std::string>());
      } else if (key == "norm_scheme") {
        c.norm_scheme = norm_scheme_from_string(value.get<std::string>());
      } else if (key == "conv_activation") {
        c.conv_activation =
            conv_activation_from_string(value.get<std::string>());
      } else if (key == "positional") {
        c.positional = positional_from_string(value.get<std::string>());
      } else if (key == "unet") {
        c.unet = value.get<bool>();
      } else if (key == "downsample_after_block") {
        c.downsample_after_block = value.get<int64_t>();
      } else if (key == "subsampling") {
        c.subsampling = subsampling_from_string(value.get<std::string>());
      } else if (key == "input_feature_dim") {
        c.input_feature_dim = value.get<int64_t>();
      } else if (key == "vocab_size") {
        c.vocab_size = value.get<int64_t>();
      } else if (key == "dropout_rate") {
        c.dropout_rate = value.get<double>();
      } else if (key == "attention_dropout_rate") {
        c.attention_dropout_rate = value.get<double>();
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    } catch (const json::type_error& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace sqz
