#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "uwipt/core/serialize.hpp"
#include "uwipt/model/ipt.hpp"

// Checkpoint file: a plain-text header of ModelConfig fields, closed by a
// line "end", immediately followed by a PFT1 tensor container.

namespace uwipt {

inline constexpr const char* kCheckpointHeader = "uwipt-checkpoint 1";

inline void save_checkpoint(std::ostream& os, const IptModel<float>& model) {
  os << kCheckpointHeader << '\n' << model.config().to_text() << "end\n";
  NamedTensors tensors;
  for (auto& [name, t] : model.named_parameters()) tensors.emplace_back(name, t);
  write_tensors(os, tensors);
}

inline void save_checkpoint(const std::filesystem::path& path, const IptModel<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
  save_checkpoint(os, model);
}

inline ModelConfig read_checkpoint_config(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointHeader) {
    throw DataError("checkpoint: missing '" + std::string(kCheckpointHeader) + "' header");
  }
  ModelConfig config;
  std::string key, value;
  while (std::getline(is, line)) {
    if (line == "end") return config;
    if (split_key_value(line, key, value)) config.set(key, value);
  }
  throw DataError("checkpoint: header is not terminated by 'end'");
}

/// Loads a checkpoint. When `expected` is given its configuration must match
/// the header. Every tensor must be present with the model's shape.
inline IptModel<float> load_checkpoint(std::istream& is, const ModelConfig* expected = nullptr) {
  const ModelConfig config = read_checkpoint_config(is);
  if (expected && !(*expected == config)) {
    throw ConfigError("checkpoint configuration differs from the requested one:\n--- checkpoint\n" +
                      config.to_text() + "--- requested\n" + expected->to_text());
  }
  IptModel<float> model(config, 0);
  std::map<std::string, Tensor<float>> stored;
  for (auto& [name, t] : read_tensors(is)) stored.emplace(name, t);
  for (auto& [name, param] : model.named_parameters()) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw ConfigError("checkpoint: tensor '" + name + "' is missing");
    if (it->second.shape() != param.shape()) {
      throw ConfigError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                        ", model expects " + shape_str(param.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), param.mutable_data().begin());
    stored.erase(it);
  }
  if (!stored.empty()) {
    throw ConfigError("checkpoint: unexpected tensor '" + stored.begin()->first + "' for this configuration");
  }
  return model;
}

inline IptModel<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  return load_checkpoint(is, expected);
}

}  // namespace uwipt
