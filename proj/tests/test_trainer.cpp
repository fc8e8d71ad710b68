#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "support/oracles.hpp"
#include "uwipt/train/trainer.hpp"

using namespace uwipt;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(std::vector<TaskId> tasks = {kAllTasks.begin(), kAllTasks.end()}) {
  ModelConfig c;
  c.channels = 4;
  c.patch = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.attn_heads = 2;
  c.ffn_multiplier = 2;
  c.max_tokens = 64;
  c.tasks = std::move(tasks);
  return c;
}

std::vector<ImagePair> pairs_for(TaskId task, std::size_t n, std::size_t side, std::uint64_t seed) {
  SynthOptions so;
  so.count = n;
  so.width = so.height = side;
  so.seed = seed;
  switch (task) {
    case TaskId::Derain: so.kind = SynthKind::Rain; break;
    case TaskId::Upscale2x: so.kind = SynthKind::Downscale, so.factor = 2; break;
    case TaskId::Upscale4x: so.kind = SynthKind::Downscale, so.factor = 4; break;
    case TaskId::Underwater: so.kind = SynthKind::Underwater; break;
    default: so.kind = SynthKind::Noise;
  }
  return synth_pairs(so);
}

template <typename T>
TaskBatch<T> batch_of(TaskId task, const std::vector<ImagePair>& pairs, const ModelConfig& cfg) {
  TaskBatch<T> b{task, {}};
  for (const auto& p : pairs) b.samples.push_back(make_sample<T>(p, task, cfg));
  return b;
}

std::vector<float> flat_parameters(const IptModel<float>& m) {
  std::vector<float> out;
  for (const auto& [n, t] : m.named_parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST(MultitaskLoss, CopyModelOnCleanInputIsZero) {
  const auto cfg = small_config();
  const auto model = IptModel<float>::identity(cfg);
  auto pairs = pairs_for(TaskId::DenoiseSigma30, 2, 8, 1);
  for (auto& p : pairs) p.corrupted = p.clean;
  const Tensor<float> loss = multitask_loss(model, {batch_of<float>(TaskId::DenoiseSigma30, pairs, cfg)});
  EXPECT_EQ(loss.item(), 0.0f);
}

TEST(MultitaskLoss, ZeroOutputAgainstWhiteIsOne) {
  const auto cfg = small_config();
  IptModel<float> model(cfg, 0);
  for (auto& [n, t] : model.named_parameters()) {
    for (auto& v : t.mutable_data()) v = 0.0f;
  }
  ImagePair p{Image(8, 8, 10), Image(8, 8, 255), "w", 0};
  EXPECT_FLOAT_EQ(multitask_loss(model, {batch_of<float>(TaskId::Derain, {p}, cfg)}).item(), 1.0f);
}

TEST(MultitaskLoss, JointEqualsSumOfTasks) {
  const auto cfg = small_config();
  IptModel<double> model(cfg, 3);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    std::vector<TaskBatch<double>> batches;
    double separate = 0.0;
    for (TaskId t : {TaskId::DenoiseSigma30, TaskId::Derain, TaskId::Upscale2x, TaskId::Upscale4x}) {
      batches.push_back(batch_of<double>(t, pairs_for(t, 2, 16, trial), cfg));
      separate += multitask_loss(model, {batches.back()}).item();
    }
    EXPECT_NEAR(multitask_loss(model, batches).item(), separate, 1e-6) << trial;
  }
}

TEST(MultitaskLoss, MissingTaskIsConfigError) {
  const auto cfg = small_config({TaskId::DenoiseSigma30});
  const IptModel<float> model(cfg, 0);
  const auto other = small_config();
  EXPECT_THROW(multitask_loss(model, {batch_of<float>(TaskId::Derain, pairs_for(TaskId::Derain, 1, 8, 0), other)}),
               ConfigError);
}

TEST(MultitaskLoss, GradientFlowCompleteness) {
  const auto cfg = small_config({TaskId::DenoiseSigma30, TaskId::Derain, TaskId::Upscale2x});
  const IptModel<float> model(cfg, 1);
  std::vector<TaskBatch<float>> batches;
  for (TaskId t : {TaskId::DenoiseSigma30, TaskId::Upscale2x}) batches.push_back(batch_of<float>(t, pairs_for(t, 1, 8, 2), cfg));
  backward(multitask_loss(model, batches));
  std::set<std::string> used;
  for (const auto& [name, t] : model.parameters_for({TaskId::DenoiseSigma30, TaskId::Upscale2x})) used.insert(name);
  EXPECT_LT(used.size(), model.named_parameters().size());
  for (const auto& [name, t] : model.named_parameters()) EXPECT_EQ(t.has_grad(), used.count(name) == 1) << name;
}

TEST(MultitaskLoss, MismatchedPairIsNamed) {
  const auto cfg = small_config();
  ImagePair p{Image(8, 8), Image(10, 8), "fish042", 45};
  try {
    make_sample<float>(p, TaskId::DenoiseSigma30, cfg);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("fish042_r45"), std::string::npos) << e.what();
  }
  ImagePair odd{Image(7, 8), Image(7, 8), "odd", 0};
  EXPECT_THROW(make_sample<float>(odd, TaskId::DenoiseSigma30, cfg), DimensionError);
  ImagePair big{Image(32, 32), Image(32, 32), "big", 0};
  EXPECT_THROW(make_sample<float>(big, TaskId::DenoiseSigma30, cfg), CapacityError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor<double> p({3}, {0.5, -1.0, 2.0}, true);
  p.mutable_grad();
  AdamState<double> st;
  for (int i = 0; i < 5; ++i) adam_step<double>({{"p", p}}, st, AdamConfig{});
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(st.t, 5u);
}

TEST(Adam, FirstStepHandComputation) {
  Tensor<double> p({1}, {0.0}, true);
  p.mutable_grad()[0] = 1.0;
  AdamState<double> st;
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_step<double>({{"p", p}}, st, cfg);
  EXPECT_NEAR(p.data()[0], -1e-3 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, MatchesStraightLineOracle) {
  Rng rng(5);
  for (int problem = 0; problem < 10; ++problem) {
    oracle::Quadratic q;
    std::vector<double> init;
    for (int i = 0; i < 10; ++i) {
      q.center.push_back(rng.uniform(-2, 2));
      q.curvature.push_back(rng.uniform(0.1, 3));
      init.push_back(rng.uniform(-2, 2));
    }
    AdamConfig cfg;
    cfg.learning_rate = 0.05;
    Tensor<double> p({10}, init, true);
    AdamState<double> st;
    for (int step = 0; step < 50; ++step) {
      auto g = p.mutable_grad();
      for (std::size_t i = 0; i < 10; ++i) g[i] = 2.0 * q.curvature[i] * (p.data()[i] - q.center[i]);
      adam_step<double>({{"p", p}}, st, cfg);
    }
    const auto ref = oracle::adam(init, q, 50, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(p.data()[i], ref[i], 1e-7) << problem;
  }
}

TEST(Adam, MissingGradientIsNamed) {
  Tensor<float> a({2}, {1, 2}, true), b({2}, {3, 4}, true);
  a.mutable_grad();
  AdamState<float> st;
  try {
    adam_step<float>({{"a", a}, {"weights.b", b}}, st, AdamConfig{});
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("weights.b"), std::string::npos);
  }
}

TEST(Adam, ConfigValidation) {
  AdamConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroEpochsIsANoOp) {
  IptModel<float> model(small_config(), 0);
  const auto before = flat_parameters(model);
  TrainConfig tc;
  tc.epochs = 0;
  const TrainLog log = train(model, {TaskData{TaskId::DenoiseSigma30, pairs_for(TaskId::DenoiseSigma30, 2, 8, 0)}}, tc);
  EXPECT_TRUE(log.steps.empty());
  EXPECT_EQ(flat_parameters(model), before);
}

TEST(Train, StepCountsEpochBoundariesAndCsv) {
  IptModel<float> model(small_config(), 0);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  const auto pairs = pairs_for(TaskId::DenoiseSigma30, 5, 8, 0);
  const TrainLog log = train(model, {TaskData{TaskId::DenoiseSigma30, pairs}}, tc);
  ASSERT_EQ(log.steps.size(), 9u);  // 3 * ceil(5 / 2)
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    EXPECT_EQ(log.steps[i].step, i + 1);
    EXPECT_EQ(log.steps[i].epoch, i / 3 + 1);
    EXPECT_EQ(log.steps[i].task, "denoise");
  }
  EXPECT_EQ(log.epoch_ms.size(), 3u);
  const std::string csv = log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,task,loss,elapsed_ms");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 10u);
}

TEST(Train, MultitaskStepsFollowLargestTask) {
  IptModel<float> model(small_config(), 0);
  TrainConfig tc;
  tc.epochs = 1;
  const TrainLog log = train(model,
                             {TaskData{TaskId::DenoiseSigma30, pairs_for(TaskId::DenoiseSigma30, 3, 8, 0)},
                              TaskData{TaskId::Derain, pairs_for(TaskId::Derain, 5, 8, 1)}},
                             tc);
  ASSERT_EQ(log.steps.size(), 5u);
  EXPECT_EQ(log.steps[0].task, "denoise+derain");
}

TEST(Train, LogRejectsNonIncreasingSteps) {
  TrainLog log;
  log.append({1, 1, "denoise", 0.5, 0});
  EXPECT_THROW(log.append({1, 1, "denoise", 0.4, 0}), ContractError);
}

TEST(Train, BitwiseReproducible) {
  const auto pairs = pairs_for(TaskId::DenoiseSigma30, 4, 8, 3);
  TrainConfig tc;
  tc.epochs = 25;  // 100 steps
  tc.seed = 9;
  IptModel<float> a(small_config(), 2), b(small_config(), 2);
  const TrainLog la = train(a, {TaskData{TaskId::DenoiseSigma30, pairs}}, tc);
  const TrainLog lb = train(b, {TaskData{TaskId::DenoiseSigma30, pairs}}, tc);
  ASSERT_EQ(la.steps.size(), 100u);
  EXPECT_EQ(flat_parameters(a), flat_parameters(b));
  for (std::size_t i = 0; i < la.steps.size(); ++i) EXPECT_EQ(la.steps[i].loss, lb.steps[i].loss) << "step " << i;
}

TEST(Train, WritesOneCheckpointPerEpoch) {
  const fs::path dir = fs::temp_directory_path() / "uwipt_test_ckpts";
  fs::remove_all(dir);
  IptModel<float> model(small_config(), 0);
  TrainConfig tc;
  tc.epochs = 2;
  tc.checkpoint_dir = dir;
  const TrainLog log = train(model, {TaskData{TaskId::DenoiseSigma30, pairs_for(TaskId::DenoiseSigma30, 2, 8, 0)}}, tc);
  ASSERT_EQ(log.checkpoints.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "epoch_1.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "epoch_2.ckpt"));
  const IptModel<float> last = load_checkpoint(dir / "epoch_2.ckpt");
  EXPECT_EQ(flat_parameters(last), flat_parameters(model));
}

TEST(Train, LossFallsOnAFixedDeskBatch) {
  SynthOptions so;
  so.kind = SynthKind::Noise;
  so.count = 8;
  so.seed = 6;
  const std::vector<ImagePair> batch = {synth_pairs(so).front()};  // 48x48, sigma 30
  IptModel<float> model(ModelConfig{}, 6);
  TrainConfig tc;
  tc.epochs = 21;
  tc.adam.learning_rate = 1e-4;
  const TrainLog log = train(model, {TaskData{TaskId::DenoiseSigma30, batch}}, tc);
  ASSERT_EQ(log.steps.size(), 21u);
  int falls = 0;
  for (std::size_t i = 1; i < log.steps.size(); ++i) falls += log.steps[i].loss < log.steps[i - 1].loss;
  EXPECT_GE(falls, 16) << "loss fell on " << falls << " of 20 steps";
}

TEST(Finetune, ZeroLearningRateKeepsWeightsAndReportsEvaluationLoss) {
  const auto cfg = small_config();
  IptModel<float> model(cfg, 4);
  const auto before = flat_parameters(model);
  const auto pairs = pairs_for(TaskId::Underwater, 3, 8, 5);
  TrainConfig tc;
  tc.epochs = 1;
  tc.adam.learning_rate = 0.0;
  const TrainLog log = finetune(model, pairs, tc);
  EXPECT_EQ(flat_parameters(model), before);
  ASSERT_EQ(log.steps.size(), 3u);
  std::multiset<float> eval, trace;
  for (const auto& p : pairs) {
    NoGradGuard g;
    eval.insert(multitask_loss(model, {batch_of<float>(TaskId::Underwater, {p}, cfg)}).item());
  }
  for (const auto& s : log.steps) trace.insert(static_cast<float>(s.loss));
  EXPECT_EQ(trace, eval);
}

TEST(Finetune, RequiresUnderwaterTask) {
  IptModel<float> model(small_config({TaskId::DenoiseSigma30}), 0);
  EXPECT_THROW(finetune(model, pairs_for(TaskId::Underwater, 1, 8, 0), TrainConfig{}), ConfigError);
}

TEST(Finetune, PretrainingLowersTheFirstLoss) {
  const auto cfg = small_config({TaskId::DenoiseSigma30, TaskId::Underwater});
  const auto underwater = pairs_for(TaskId::Underwater, 4, 16, 7);
  IptModel<float> pretrained(cfg, 6), scratch(cfg, 6);
  TrainConfig pre;
  pre.epochs = 10;
  pre.adam.learning_rate = 1e-3;
  train(pretrained, {TaskData{TaskId::DenoiseSigma30, pairs_for(TaskId::DenoiseSigma30, 20, 16, 8)}}, pre);
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 3;
  const TrainLog a = finetune(pretrained, underwater, tc);
  const TrainLog b = finetune(scratch, underwater, tc);
  EXPECT_LT(a.steps.front().loss, b.steps.front().loss);
}
