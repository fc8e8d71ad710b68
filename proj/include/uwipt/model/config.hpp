#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "uwipt/model/task.hpp"

namespace uwipt {

/// Architecture hyperparameters. Defaults are sized for CPU training.
struct ModelConfig {
  std::size_t channels = 32;       // C, head output channels
  std::size_t patch = 4;           // P, patch side
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t attn_heads = 4;
  std::size_t ffn_multiplier = 4;
  std::size_t max_tokens = 576;    // rows of the positional table
  std::vector<TaskId> tasks = {kAllTasks.begin(), kAllTasks.end()};
  /// Underwater always reuses the denoise head and tail; this only decides
  /// whether it also gets its own task embedding.
  bool underwater_own_embedding = false;

  std::size_t embed_dim() const { return channels * patch * patch; }

  bool has_task(TaskId t) const { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); }

  void validate() const {
    if (channels == 0 || patch == 0 || attn_heads == 0 || ffn_multiplier == 0 || max_tokens == 0) {
      throw ConfigError("model config: channels, patch, attn_heads, ffn_multiplier and max_tokens must be >= 1");
    }
    if (embed_dim() % attn_heads != 0) {
      throw ConfigError("model config: embed_dim " + std::to_string(embed_dim()) +
                        " is not divisible by attn_heads " + std::to_string(attn_heads));
    }
    if (tasks.empty()) throw ConfigError("model config: no tasks");
    if (has_task(TaskId::Underwater) && !has_task(TaskId::DenoiseSigma30)) {
      throw ConfigError("model config: underwater routes through the denoise head, add 'denoise' to tasks");
    }
  }

  /// Task whose head and tail serve `task`.
  TaskId route(TaskId task) const {
    return task == TaskId::Underwater ? TaskId::DenoiseSigma30 : task;
  }

  /// Task whose embedding serves `task`.
  TaskId embedding_owner(TaskId task) const {
    return task == TaskId::Underwater && !underwater_own_embedding ? TaskId::DenoiseSigma30 : task;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "channels = " << channels << '\n'
       << "patch = " << patch << '\n'
       << "encoder_layers = " << encoder_layers << '\n'
       << "decoder_layers = " << decoder_layers << '\n'
       << "attn_heads = " << attn_heads << '\n'
       << "ffn_multiplier = " << ffn_multiplier << '\n'
       << "max_tokens = " << max_tokens << '\n'
       << "tasks = ";
    for (std::size_t i = 0; i < tasks.size(); ++i) os << (i ? "," : "") << task_name(tasks[i]);
    os << '\n' << "underwater_own_embedding = " << (underwater_own_embedding ? 1 : 0) << '\n';
    return os.str();
  }

  /// Applies one `key = value` line; unknown keys are a configuration error.
  void set(const std::string& key, const std::string& value) {
    auto number = [&]() -> std::size_t {
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("model config: '" + key + "' expects an integer, got '" + value + "'");
      }
      return v;
    };
    if (key == "channels") channels = number();
    else if (key == "patch") patch = number();
    else if (key == "encoder_layers") encoder_layers = number();
    else if (key == "decoder_layers") decoder_layers = number();
    else if (key == "attn_heads") attn_heads = number();
    else if (key == "ffn_multiplier") ffn_multiplier = number();
    else if (key == "max_tokens") max_tokens = number();
    else if (key == "underwater_own_embedding") underwater_own_embedding = number() != 0;
    else if (key == "tasks") {
      tasks.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) tasks.push_back(parse_task(item));
      }
    } else {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

/// "a = b" with surrounding blanks removed; returns false for blank and `#` lines.
inline bool split_key_value(const std::string& line, std::string& key, std::string& value) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  const std::string t = trim(line);
  if (t.empty() || t[0] == '#') return false;
  const auto eq = t.find('=');
  if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + t + "'");
  key = trim(t.substr(0, eq));
  value = trim(t.substr(eq + 1));
  return true;
}

}  // namespace uwipt
