#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uwipt/baseline/dcp.hpp"
#include "uwipt/data/dataset.hpp"
#include "uwipt/data/image_io.hpp"
#include "uwipt/metrics/metrics.hpp"
#include "uwipt/model/checkpoint.hpp"
#include "uwipt/model/gradcheck_suite.hpp"
#include "uwipt/model/inference.hpp"
#include "uwipt/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace uwipt;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = "uwipt_out";
  bool quiet = false;
};

struct ModelFlags {
  std::size_t channels = 32;
  std::size_t patch = 4;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_multiplier = 4;
  std::size_t max_tokens = 576;
  std::string tasks = "denoise,derain,x2,x4,underwater";
  bool underwater_embedding = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--channels", channels, "Head output channels C")->capture_default_str();
    cmd->add_option("--patch", patch, "Patch side P")->capture_default_str();
    cmd->add_option("--encoder-layers", encoder_layers)->capture_default_str();
    cmd->add_option("--decoder-layers", decoder_layers)->capture_default_str();
    cmd->add_option("--heads", heads, "Attention heads")->capture_default_str();
    cmd->add_option("--ffn-multiplier", ffn_multiplier)->capture_default_str();
    cmd->add_option("--max-tokens", max_tokens, "Rows of the positional table")->capture_default_str();
    cmd->add_option("--tasks", tasks, "Comma-separated task list")->capture_default_str();
    cmd->add_flag("--underwater-embedding", underwater_embedding, "Give the underwater task its own embedding");
  }

  ModelConfig build() const {
    ModelConfig c;
    c.channels = channels;
    c.patch = patch;
    c.encoder_layers = encoder_layers;
    c.decoder_layers = decoder_layers;
    c.attn_heads = heads;
    c.ffn_multiplier = ffn_multiplier;
    c.max_tokens = max_tokens;
    c.set("tasks", tasks);
    c.underwater_own_embedding = underwater_embedding;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 6;
  std::size_t batch = 1;
  double lr = 1e-4;
  std::size_t max_steps = 0;
  double clip = 0.0;
  std::size_t log_every = 50;

  void add_to(CLI::App* cmd, double default_lr) {
    lr = default_lr;
    cmd->add_option("--epochs", epochs)->capture_default_str();
    cmd->add_option("--batch", batch, "Samples per task per step")->capture_default_str();
    cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--max-steps", max_steps, "Stop after this many steps (0: no cap)")->capture_default_str();
    cmd->add_option("--clip-grad-norm", clip, "Global gradient-norm clip (0: off)")->capture_default_str();
    cmd->add_option("--log-every", log_every, "Progress line cadence on stderr")->capture_default_str();
  }

  TrainConfig build(const Globals& g) const {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.adam.learning_rate = lr;
    c.seed = g.seed;
    c.max_steps = max_steps;
    c.clip_grad_norm = clip;
    c.log_every = log_every;
    c.checkpoint_dir = fs::path(g.out) / "checkpoints";
    if (!g.quiet) {
      c.on_progress = [](const StepRecord& r) {
        std::cerr << "epoch " << r.epoch << " step " << r.step << " loss " << r.loss << '\n';
      };
    }
    return c;
  }
};

void info(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

std::string option_value(const CLI::Option* opt) {
  if (opt->count() == 0) {
    const std::string d = opt->get_default_str();
    return d.empty() && opt->get_expected_max() == 0 ? "false" : d;
  }
  const auto& r = opt->results();
  std::string s;
  for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
  return s;
}

/// Every option of the global app and the chosen command as `key = value`.
std::string effective_config(const CLI::App& app, const CLI::App& cmd) {
  std::ostringstream os;
  os << "command = " << cmd.get_name() << '\n';
  for (const CLI::App* a : {&app, &cmd}) {
    for (const CLI::Option* opt : a->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "help" || name == "config") continue;
      os << name << " = " << option_value(opt) << '\n';
    }
  }
  return os.str();
}

/// Reads the flat config file and installs its values as option defaults of
/// the command (or the global app), so explicit flags still win.
void apply_config_file(const std::string& path, CLI::App& app, CLI::App* cmd) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::string line, key, value;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!split_key_value(line, key, value)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = nullptr;
    for (CLI::App* a : {cmd, &app}) {
      if (!a) continue;
      try {
        opt = a->get_option("--" + key);
        break;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    if (!opt || key == "config" || key == "help") {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      opt->default_val(value);
    } catch (const CLI::Error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<ImagePair> manifest_split(const std::string& manifest_path, Split split) {
  const fs::path m(manifest_path);
  return load_split(m.parent_path(), read_manifest(m), split);
}

/// `task=path`: a manifest file selects the train split of a prepared
/// directory; a directory is read as a raw pair dataset.
TaskData parse_source(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--source expects task=path, got '" + spec + "'");
  TaskData d{parse_task(spec.substr(0, eq)), {}};
  const fs::path path = spec.substr(eq + 1);
  if (fs::is_directory(path)) {
    d.pairs = load_pairs(path, task_scale(d.task) == 1);
  } else {
    d.pairs = manifest_split(path.string(), Split::Train);
  }
  return d;
}

void write_training_outputs(const Globals& g, const IptModel<float>& model, const TrainLog& log) {
  const fs::path out(g.out);
  save_checkpoint(out / "model.ckpt", model);
  write_text_file(out / "loss.csv", log.to_csv());
  std::cout << "steps=" << log.steps.size();
  if (!log.steps.empty()) std::cout << " final_loss=" << log.steps.back().loss;
  std::cout << '\n';
}

/// Largest square tile whose token count fits the positional table.
std::size_t auto_tile(const ModelConfig& c, const Image& img) {
  const std::size_t tokens = ((img.width + c.patch - 1) / c.patch) * ((img.height + c.patch - 1) / c.patch);
  if (tokens <= c.max_tokens) return 0;
  const auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(c.max_tokens)));
  return side * c.patch;
}

Enhancer make_enhancer(const std::string& method, const IptModel<float>* model, TaskId task, std::size_t tile) {
  if (method == "identity") return [](const Image& x) { return x; };
  if (method == "dcp") return [](const Image& x) { return dehaze(x); };
  if (method == "ipt" && model) {
    return [model, task, tile](const Image& x) {
      return enhance_image(*model, x, task, tile ? tile : auto_tile(model->config(), x));
    };
  }
  throw ConfigError("unknown method '" + method + "' (expected dcp or identity, or pass --model)");
}

std::vector<fs::path> image_inputs(const fs::path& in) {
  if (!fs::exists(in)) throw DataError("input " + in.string() + " does not exist");
  if (!fs::is_directory(in)) return {in};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in)) {
    if (e.is_regular_file() && is_image_path(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void report_gradchecks(const std::vector<GradcheckResult>& results, std::vector<std::string>& offenders) {
  for (const auto& r : results) {
    std::printf("%-32s %.3e %s\n", r.group.c_str(), r.worst, r.passed ? "PASS" : "FAIL");
    if (!r.passed) offenders.push_back(r.group);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Underwater image enhancement with an image-processing transformer"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--config", g.config, "Flat 'key = value' file; explicit flags override it");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress on stderr");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Smooth, rotate and split a paired dataset");
  std::string prep_data, prep_smooth = "clean", prep_kind = "box", prep_format = "png";
  double prep_frac = 0.8;
  prepare->add_option("--data", prep_data, "Dataset root with corrupted/ and clean/")->required();
  prepare->add_option("--smooth", prep_smooth, "Which side to smooth")
      ->check(CLI::IsMember({"clean", "both", "none"}))
      ->capture_default_str();
  prepare->add_option("--smooth-kind", prep_kind)->check(CLI::IsMember({"box", "gaussian"}))->capture_default_str();
  prepare->add_option("--train-frac", prep_frac, "Fraction of base images for training")->capture_default_str();
  prepare->add_option("--format", prep_format)->check(CLI::IsMember({"png", "ppm"}))->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  SynthOptions so;
  std::string synth_kind = "underwater", synth_sources, synth_format = "png";
  synth->add_option("--kind", synth_kind)
      ->check(CLI::IsMember({"underwater", "noise", "rain", "downscale"}))
      ->capture_default_str();
  synth->add_option("--n", so.count, "Number of pairs")->capture_default_str();
  synth->add_option("--width", so.width)->capture_default_str();
  synth->add_option("--height", so.height)->capture_default_str();
  synth->add_option("--sigma", so.sigma, "Noise sigma on the 0-255 scale")->capture_default_str();
  synth->add_option("--factor", so.factor, "Downscale factor")->check(CLI::IsMember({2, 4}))->capture_default_str();
  synth->add_option("--rain-density", so.rain.density)->capture_default_str();
  synth->add_option("--rain-length", so.rain.length)->capture_default_str();
  synth->add_option("--rain-angle", so.rain.angle)->capture_default_str();
  synth->add_option("--rain-intensity", so.rain.intensity)->capture_default_str();
  synth->add_option("--cast", so.underwater.cast_strength)->capture_default_str();
  synth->add_option("--blur", so.underwater.blur_radius, "Gaussian sigma")->capture_default_str();
  synth->add_option("--noise", so.underwater.noise_sigma)->capture_default_str();
  synth->add_option("--sources", synth_sources, "Directory of clean images to corrupt instead of procedural ones");
  synth->add_option("--format", synth_format)->check(CLI::IsMember({"png", "ppm"}))->capture_default_str();

  // init
  auto* init = app.add_subcommand("init", "Write a freshly initialized checkpoint");
  ModelFlags init_model;
  bool init_identity = false;
  bool init_residual = false;
  init_model.add_to(init);
  init->add_flag("--identity", init_identity, "Debug model that reproduces its input");
  init->add_flag("--residual-init", init_residual, "Random body with heads and tails near the identity map")
      ->excludes("--identity");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Multi-task training from scratch or a checkpoint");
  ModelFlags pre_model;
  TrainFlags pre_train;
  std::vector<std::string> pre_sources;
  std::string pre_manifest, pre_task = "denoise", pre_init;
  pre_model.add_to(pretrain);
  pre_train.add_to(pretrain, 1e-4);
  pretrain->add_option("--manifest", pre_manifest, "Prepared manifest used for --task");
  pretrain->add_option("--task", pre_task, "Task trained on --manifest")->capture_default_str();
  pretrain->add_option("--source", pre_sources, "Extra task=path sources (manifest or raw directory)");
  pretrain->add_option("--init", pre_init, "Start from this checkpoint instead of a fresh model");

  // finetune
  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training on underwater pairs");
  TrainFlags ft_train;
  std::string ft_model, ft_manifest;
  ft_train.add_to(finetune_cmd, 5e-5);
  finetune_cmd->add_option("--model", ft_model, "Pretrained checkpoint")->required();
  finetune_cmd->add_option("--manifest", ft_manifest, "Prepared underwater manifest")->required();

  // enhance
  auto* enhance = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  std::string en_model, en_method, en_in, en_task = "underwater";
  std::size_t en_tile = 0, en_jobs = 1;
  bool en_time = false, en_strict = false;
  enhance->add_option("--model", en_model, "Checkpoint");
  enhance->add_option("--method", en_method, "Classical method instead of a model")
      ->check(CLI::IsMember({"dcp", "identity"}));
  enhance->add_option("--in", en_in, "Image file or directory")->required();
  enhance->add_option("--task", en_task)->capture_default_str();
  enhance->add_option("--tile", en_tile, "Tile side (0: full image when it fits)")->capture_default_str();
  enhance->add_option("--jobs", en_jobs, "Images processed in parallel")->check(CLI::PositiveNumber)
      ->capture_default_str();
  enhance->add_flag("--time", en_time, "Print per-image milliseconds and the mean");
  enhance->add_flag("--strict", en_strict, "Abort on an unreadable image instead of skipping it");

  // eval
  auto* eval = app.add_subcommand("eval", "Score methods on the test split");
  std::string ev_model, ev_manifest, ev_report, ev_task = "underwater";
  std::vector<std::string> ev_baselines;
  std::size_t ev_tile = 0;
  eval->add_option("--model", ev_model, "Checkpoint scored as method 'ipt'");
  eval->add_option("--manifest", ev_manifest, "Prepared manifest")->required();
  eval->add_option("--baseline", ev_baselines, "dcp and/or identity")->check(CLI::IsMember({"dcp", "identity"}));
  eval->add_option("--report", ev_report, "CSV path (default <out>/report.csv)");
  eval->add_option("--task", ev_task)->capture_default_str();
  eval->add_option("--tile", ev_tile)->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and the model");
  GradcheckOptions gc;
  bool gc_float64 = false;
  std::string gc_corrupt;
  gradcheck->add_option("--size", gc.size, "Input side length")->capture_default_str();
  gradcheck->add_option("--layers", gc.layers, "Encoder and decoder depth")->capture_default_str();
  gradcheck->add_option("--samples", gc.samples, "Coordinates per parameter group")->capture_default_str();
  gradcheck->add_option("--op-trials", gc.op_trials, "Random instances per op")->capture_default_str();
  gradcheck->add_flag("--float64", gc_float64, "Run everything in float64 shadow mode");
  gradcheck->add_option("--corrupt-backward", gc_corrupt, "Test hook: scale this op's backward rule");

  // Locate the command and apply --config before parsing, so flags override.
  CLI::App* chosen = nullptr;
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
    for (CLI::App* s : app.get_subcommands({})) {
      if (!chosen && s->get_name() == a) chosen = s;
    }
  }
  try {
    if (!config_path.empty()) apply_config_file(config_path, app, chosen);
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const fs::path out(g.out);
  auto snapshot = [&] { write_text_file(out / "effective_config.txt", effective_config(app, *cmd)); };

  try {
    if (cmd == prepare) {
      PrepareOptions opt;
      opt.seed = g.seed;
      opt.train_fraction = prep_frac;
      opt.smooth_clean = prep_smooth != "none";
      opt.smooth_corrupted = prep_smooth == "both";
      opt.smooth_kind = prep_kind == "box" ? SmoothKind::Box : SmoothKind::Gaussian;
      opt.format = prep_format == "png" ? ImageFormat::Png : ImageFormat::Ppm;
      snapshot();
      const auto summary = prepare_dataset(prep_data, out, opt);
      std::cout << "train=" << summary.manifest.train.size() << " test=" << summary.manifest.test.size() << '\n';
    } else if (cmd == synth) {
      so.kind = parse_synth_kind(synth_kind);
      so.seed = g.seed;
      std::vector<Image> sources;
      if (!synth_sources.empty()) {
        for (const auto& p : image_inputs(synth_sources)) sources.push_back(read_image(p));
        if (sources.empty()) throw DataError("no images under " + synth_sources);
      }
      snapshot();
      const auto pairs =
          write_synth_dataset(out, so, sources, synth_format == "png" ? ImageFormat::Png : ImageFormat::Ppm);
      std::cout << "pairs=" << pairs.size() << '\n';
    } else if (cmd == init) {
      const ModelConfig c = init_model.build();
      snapshot();
      const IptModel<float> model = init_identity   ? IptModel<float>::identity(c)
                                    : init_residual ? IptModel<float>::residual_init(c, g.seed)
                                                    : IptModel<float>(c, g.seed);
      save_checkpoint(out / "model.ckpt", model);
      std::cout << "parameters=" << model.parameter_count() << '\n';
    } else if (cmd == pretrain) {
      std::vector<TaskData> sources;
      if (!pre_manifest.empty()) sources.push_back({parse_task(pre_task), manifest_split(pre_manifest, Split::Train)});
      for (const auto& s : pre_sources) sources.push_back(parse_source(s));
      if (sources.empty()) throw ConfigError("pretrain: give --manifest or at least one --source");
      IptModel<float> model = pre_init.empty() ? IptModel<float>(pre_model.build(), g.seed) : load_checkpoint(pre_init);
      snapshot();
      const TrainLog log = train(model, sources, pre_train.build(g));
      write_training_outputs(g, model, log);
    } else if (cmd == finetune_cmd) {
      IptModel<float> model = load_checkpoint(ft_model);
      const auto pairs = manifest_split(ft_manifest, Split::Train);
      snapshot();
      const TrainLog log = finetune(model, pairs, ft_train.build(g));
      write_training_outputs(g, model, log);
    } else if (cmd == enhance) {
      if (en_model.empty() == en_method.empty()) throw ConfigError("enhance: give exactly one of --model or --method");
      std::optional<IptModel<float>> model;
      if (!en_model.empty()) model.emplace(load_checkpoint(en_model));
      const TaskId task = parse_task(en_task);
      if (model && !model->config().has_task(task)) {
        throw ConfigError("enhance: checkpoint has no task '" + en_task + "'");
      }
      const Enhancer fn = make_enhancer(model ? "ipt" : en_method, model ? &*model : nullptr, task, en_tile);
      const auto files = image_inputs(en_in);
      snapshot();
      std::vector<double> ms(files.size(), -1.0);
      std::vector<std::string> failures(files.size());
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (std::size_t i; (i = next++) < files.size();) {
          Image img;
          try {
            img = read_image(files[i]);
          } catch (const DataError& e) {
            failures[i] = e.what();
            if (en_strict) return;
            continue;
          }
          const auto t0 = std::chrono::steady_clock::now();
          const Image result = fn(img);
          ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          write_image(result, out / files[i].filename());
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t j = 1; j < std::min(en_jobs, files.size()); ++j) pool.emplace_back(worker);
      worker();
      for (auto& t : pool) t.join();
      double total = 0.0;
      std::size_t done = 0;
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (!failures[i].empty()) {
          if (en_strict) throw DataError(failures[i]);
          std::cerr << "warning: skipped " << failures[i] << '\n';
          continue;
        }
        if (ms[i] < 0) continue;
        total += ms[i];
        ++done;
        if (en_time) std::printf("%s %.3f\n", files[i].filename().string().c_str(), ms[i]);
      }
      if (en_time && done) std::printf("mean_ms %.3f\n", total / static_cast<double>(done));
      info(g, "enhanced " + std::to_string(done) + " of " + std::to_string(files.size()) + " images");
    } else if (cmd == eval) {
      std::optional<IptModel<float>> model;
      if (!ev_model.empty()) model.emplace(load_checkpoint(ev_model));
      const TaskId task = parse_task(ev_task);
      if (!model && ev_baselines.empty()) throw ConfigError("eval: give --model and/or --baseline");
      const auto pairs = manifest_split(ev_manifest, Split::Test);
      if (pairs.empty()) throw DataError("eval: test split of " + ev_manifest + " is empty");
      snapshot();
      std::vector<MetricReport> reports;
      if (model) reports.push_back(evaluate("ipt", make_enhancer("ipt", &*model, task, ev_tile), pairs));
      for (const auto& b : ev_baselines) reports.push_back(evaluate(b, make_enhancer(b, nullptr, task, 0), pairs));
      write_text_file(ev_report.empty() ? out / "report.csv" : fs::path(ev_report), report_csv(reports));
      std::cout << report_table(reports);
    } else if (cmd == gradcheck) {
      gc.seed = g.seed;
      if (gc.size % 2) throw ConfigError("gradcheck: --size must be even");
      detail::corrupted_backward_op() = gc_corrupt;
      snapshot();
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<std::string> offenders;
      const IptModel<float> probe(gradcheck_model_config(gc), g.seed);
      if (gc_float64) {
        const GradcheckTolerance tol{1e-5, 1e-5, 1e-6, false};
        report_gradchecks(op_gradchecks<double>(gc, tol), offenders);
        IptModel<double> model = probe.cast<double>();
        randomize_parameters(model, g.seed);
        auto model_tol = tol;
        model_tol.normwise = true;
        report_gradchecks(model_gradchecks(model, gc, model_tol), offenders);
      } else {
        report_gradchecks(op_gradchecks<float>(gc, default_tolerance<float>()), offenders);
        IptModel<float> model = probe;
        randomize_parameters(model, g.seed);
        report_gradchecks(model_gradchecks(model, gc, shadow_tolerance(), true), offenders);
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      info(g, "gradcheck finished in " + std::to_string(secs) + " s");
      if (!offenders.empty()) {
        std::cerr << "gradcheck: tolerance exceeded in";
        for (const auto& o : offenders) std::cerr << ' ' << o;
        std::cerr << '\n';
        return kFailure;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const CapacityError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
