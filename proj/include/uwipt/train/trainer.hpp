#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/core/ops.hpp"
#include "uwipt/core/rng.hpp"
#include "uwipt/data/dataset.hpp"
#include "uwipt/model/checkpoint.hpp"
#include "uwipt/model/ipt.hpp"
#include "uwipt/train/adam.hpp"

namespace uwipt {

struct StepRecord {
  std::size_t step = 0;  // 1-based, strictly increasing
  std::size_t epoch = 0;  // 1-based
  std::string task;
  double loss = 0.0;
  double elapsed_ms = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 6;
  std::size_t batch_size = 1;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;  // progress callback cadence; every step is recorded
  std::size_t max_steps = 0;   // 0: no cap
  double clip_grad_norm = 0.0;  // 0: off
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const StepRecord&)> on_progress;
  std::function<bool(const StepRecord&)> keep_going;  // returning false stops early

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (clip_grad_norm < 0) throw ConfigError("train: clip_grad_norm must be >= 0");
    adam.validate();
  }
};

/// Append-only record of a run.
struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_ms;
  std::vector<std::filesystem::path> checkpoints;

  void append(StepRecord r) {
    if (!steps.empty() && r.step <= steps.back().step) throw ContractError("TrainLog: steps must increase");
    steps.push_back(std::move(r));
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "step,epoch,task,loss,elapsed_ms\n";
    for (const auto& r : steps) {
      os << r.step << ',' << r.epoch << ',' << r.task << ',' << std::setprecision(9) << r.loss << ','
         << std::fixed << std::setprecision(3) << r.elapsed_ms << std::defaultfloat << '\n';
    }
    return os.str();
  }
};

/// Training pairs for one task.
struct TaskData {
  TaskId task;
  std::vector<ImagePair> pairs;
};

/// One batch item converted to tensors.
template <typename T>
struct Sample {
  std::string label;
  Tensor<T> input;
  Tensor<T> target;
};

template <typename T>
Sample<T> make_sample(const ImagePair& pair, TaskId task, const ModelConfig& cfg) {
  const std::string label = pair_label(pair);
  const std::size_t s = task_scale(task);
  if (pair.clean.width != pair.corrupted.width * s || pair.clean.height != pair.corrupted.height * s) {
    throw DimensionError("pair '" + label + "': clean " + std::to_string(pair.clean.width) + "x" +
                         std::to_string(pair.clean.height) + " is not " + std::to_string(s) + "x the corrupted " +
                         std::to_string(pair.corrupted.width) + "x" + std::to_string(pair.corrupted.height) +
                         " for task " + std::string(task_name(task)));
  }
  if (pair.corrupted.width % cfg.patch || pair.corrupted.height % cfg.patch) {
    throw DimensionError("pair '" + label + "': extents " + std::to_string(pair.corrupted.width) + "x" +
                         std::to_string(pair.corrupted.height) + " are not multiples of patch " +
                         std::to_string(cfg.patch));
  }
  const std::size_t tokens = (pair.corrupted.width / cfg.patch) * (pair.corrupted.height / cfg.patch);
  if (tokens > cfg.max_tokens) {
    throw CapacityError("pair '" + label + "': " + std::to_string(tokens) + " tokens exceed max_tokens " +
                        std::to_string(cfg.max_tokens));
  }
  return {label, image_to_tensor<T>(pair.corrupted), image_to_tensor<T>(pair.clean)};
}

template <typename T>
struct TaskBatch {
  TaskId task;
  std::vector<Sample<T>> samples;
};

/// Mean L1 of one task's batch.
template <typename T>
Tensor<T> task_loss(const IptModel<T>& model, const TaskBatch<T>& batch) {
  if (!model.config().has_task(batch.task)) {
    throw ConfigError(std::string("multitask_loss: model has no task '") + std::string(task_name(batch.task)) + "'");
  }
  if (batch.samples.empty()) throw ContractError("multitask_loss: empty batch");
  Tensor<T> total;
  for (const auto& s : batch.samples) {
    Tensor<T> out;
    try {
      out = model.forward(s.input, batch.task);
    } catch (const DimensionError& e) {
      throw DimensionError("pair '" + s.label + "': " + e.what());
    }
    const Tensor<T> l = l1_loss(out, s.target);
    total = total.defined() ? add(total, l) : l;
  }
  return batch.samples.size() == 1 ? total : scale(total, T{1} / static_cast<T>(batch.samples.size()));
}

/// Sum over tasks of the per-task mean L1.
template <typename T>
Tensor<T> multitask_loss(const IptModel<T>& model, const std::vector<TaskBatch<T>>& batches) {
  if (batches.empty()) throw ContractError("multitask_loss: no tasks in batch");
  Tensor<T> total;
  for (const auto& b : batches) {
    const Tensor<T> l = task_loss(model, b);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

inline std::string joined_task_names(const std::vector<TaskData>& sources) {
  std::string s;
  for (const auto& d : sources) s += (s.empty() ? "" : "+") + std::string(task_name(d.task));
  return s;
}

inline std::size_t steps_per_epoch(const std::vector<TaskData>& sources, std::size_t batch) {
  std::size_t n = 0;
  for (const auto& d : sources) n = std::max(n, d.pairs.size());
  return (n + batch - 1) / batch;
}

namespace detail {

template <typename T>
void clip_gradients(const std::vector<std::pair<std::string, Tensor<T>>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [n, p] : params) {
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const T f = static_cast<T>(max_norm / norm);
  for (const auto& [n, p] : params) {
    Tensor<T> t = p;
    for (auto& g : t.mutable_grad()) g *= f;
  }
}

}  // namespace detail

/// Epoch loop: each step draws one batch per task (samples reshuffled per
/// epoch with a seeded permutation), sums the task losses, and takes an Adam
/// step over the parameters those tasks use.
template <typename T>
TrainLog train(IptModel<T>& model, const std::vector<TaskData>& sources, const TrainConfig& cfg) {
  cfg.validate();
  TrainLog log;
  if (cfg.epochs == 0) return log;
  if (sources.empty()) throw ContractError("train: no task data");
  std::vector<TaskId> tasks;
  std::vector<std::vector<Sample<T>>> samples;
  for (const auto& d : sources) {
    if (d.pairs.empty()) throw ContractError(std::string("train: no pairs for task ") + std::string(task_name(d.task)));
    if (!model.config().has_task(d.task)) {
      throw ConfigError(std::string("train: model has no task '") + std::string(task_name(d.task)) + "'");
    }
    tasks.push_back(d.task);
    auto& list = samples.emplace_back();
    for (const auto& p : d.pairs) list.push_back(make_sample<T>(p, d.task, model.config()));
  }
  const auto params = model.parameters_for(tasks);
  AdamState<T> adam;
  const std::string task_label = joined_task_names(sources);
  const std::size_t per_epoch = steps_per_epoch(sources, cfg.batch_size);
  const Rng root = Rng(cfg.seed).split("train-shuffle");
  const auto t_start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  bool stop = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    std::vector<std::vector<std::size_t>> order(samples.size());
    for (std::size_t t = 0; t < samples.size(); ++t) {
      order[t].resize(samples[t].size());
      for (std::size_t i = 0; i < order[t].size(); ++i) order[t][i] = i;
      Rng r = root.split(epoch * 1000003 + t);
      shuffle(order[t], r);
    }
    for (std::size_t s = 0; s < per_epoch && !stop; ++s) {
      std::vector<TaskBatch<T>> batches;
      for (std::size_t t = 0; t < samples.size(); ++t) {
        TaskBatch<T> b{tasks[t], {}};
        const std::size_t n_max = steps_per_epoch(sources, 1);
        for (std::size_t k = s * cfg.batch_size; k < std::min((s + 1) * cfg.batch_size, n_max); ++k) {
          b.samples.push_back(samples[t][order[t][k % order[t].size()]]);
        }
        batches.push_back(std::move(b));
      }
      model.zero_grad();
      const Tensor<T> loss = multitask_loss(model, batches);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericError("train: loss became " + std::to_string(value) + " at step " + std::to_string(step + 1));
      }
      backward(loss);
      if (cfg.clip_grad_norm > 0) detail::clip_gradients(params, cfg.clip_grad_norm);
      adam_step(params, adam, cfg.adam);
      ++step;
      StepRecord rec{step, epoch, task_label, value,
                     std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count()};
      log.append(rec);
      if (cfg.on_progress && cfg.log_every && step % cfg.log_every == 0) cfg.on_progress(rec);
      if (cfg.max_steps && step >= cfg.max_steps) stop = true;
      if (cfg.keep_going && !cfg.keep_going(rec)) stop = true;
    }
    log.epoch_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_epoch).count());
    if (!cfg.checkpoint_dir.empty()) {
      if constexpr (std::is_same_v<T, float>) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        const auto path = cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
        save_checkpoint(path, model);
        log.checkpoints.push_back(path);
      }
    }
  }
  model.zero_grad();
  return log;
}

/// Continues training a pretrained model on underwater pairs only. The
/// underwater task is served by the denoise head and tail (see ModelConfig).
template <typename T>
TrainLog finetune(IptModel<T>& model, const std::vector<ImagePair>& underwater_pairs, const TrainConfig& cfg) {
  if (!model.config().has_task(TaskId::Underwater)) {
    throw ConfigError("finetune: checkpoint config does not enable the underwater task");
  }
  return train(model, {TaskData{TaskId::Underwater, underwater_pairs}}, cfg);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace uwipt
