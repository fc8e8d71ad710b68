#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "uwipt/core/error.hpp"

namespace uwipt {

/// Restoration task; selects head, tail, and task embedding.
enum class TaskId { DenoiseSigma30, Derain, Upscale2x, Upscale4x, Underwater };

inline constexpr std::array<TaskId, 5> kAllTasks = {TaskId::DenoiseSigma30, TaskId::Derain, TaskId::Upscale2x,
                                                    TaskId::Upscale4x, TaskId::Underwater};

inline constexpr std::string_view task_name(TaskId task) {
  switch (task) {
    case TaskId::DenoiseSigma30: return "denoise";
    case TaskId::Derain: return "derain";
    case TaskId::Upscale2x: return "x2";
    case TaskId::Upscale4x: return "x4";
    case TaskId::Underwater: return "underwater";
  }
  return "?";
}

inline TaskId parse_task(std::string_view name) {
  for (TaskId t : kAllTasks) {
    if (task_name(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected denoise, derain, x2, x4 or underwater)");
}

/// Output extent multiplier of a task.
inline constexpr std::size_t task_scale(TaskId task) {
  switch (task) {
    case TaskId::Upscale2x: return 2;
    case TaskId::Upscale4x: return 4;
    default: return 1;
  }
}

}  // namespace uwipt
