// Command-line front end: build and inspect configs, count parameters and
// FLOPs, run the redesign ladder, train on synthetic tasks, profile temporal
// redundancy and decode feature files.
//
// Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sqz/checkpoint.hpp"
#include "sqz/config_json.hpp"
#include "sqz/feature_io.hpp"
#include "sqz/flops.hpp"
#include "sqz/model.hpp"
#include "sqz/redundancy.hpp"
#include "sqz/trainer.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CliConfig {
  sqz::ModelConfig model;
  sqz::ScheduleParams schedule{2e-3, 200.0, 10000.0, 1.0};
  sqz::AdamWParams optimizer;
  sqz::SyntheticTask task;
};

sqz::ModelConfig model_from_json_object(const json& j) {
  // A "preset" key seeds the config; sibling keys override its fields.
  sqz::ModelConfig base;
  json rest = json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") {
      base = sqz::preset(value.get<std::string>());
    } else {
      rest[key] = value;
    }
  }
  sqz::ModelConfig overrides = sqz::config_from_json(rest.dump());
  // Re-apply each present key on top of the preset.
  for (const auto& [key, value] : rest.items()) {
    (void)value;
    if (key == "num_blocks") base.num_blocks = overrides.num_blocks;
    else if (key == "dim") base.dim = overrides.dim;
    else if (key == "heads") base.heads = overrides.heads;
    else if (key == "conv_kernel") base.conv_kernel = overrides.conv_kernel;
    else if (key == "ffn_expansion") base.ffn_expansion = overrides.ffn_expansion;
    else if (key == "block_structure") base.block_structure = overrides.block_structure;
    else if (key == "norm_scheme") base.norm_scheme = overrides.norm_scheme;
    else if (key == "conv_activation") base.conv_activation = overrides.conv_activation;
    else if (key == "positional") base.positional = overrides.positional;
    else if (key == "unet") base.unet = overrides.unet;
    else if (key == "downsample_after_block") base.downsample_after_block = overrides.downsample_after_block;
    else if (key == "subsampling") base.subsampling = overrides.subsampling;
    else if (key == "input_feature_dim") base.input_feature_dim = overrides.input_feature_dim;
    else if (key == "vocab_size") base.vocab_size = overrides.vocab_size;
    else if (key == "dropout_rate") base.dropout_rate = overrides.dropout_rate;
    else if (key == "attention_dropout_rate") base.attention_dropout_rate = overrides.attention_dropout_rate;
  }
  return base;
}

CliConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw sqz::ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw sqz::ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw sqz::ConfigError("config: expected a JSON object");
  CliConfig out;
  for (const auto& [section, body] : j.items()) {
    if (section == "model") {
      out.model = model_from_json_object(body);
    } else if (section == "schedule") {
      for (const auto& [key, value] : body.items()) {
        if (key == "lr_peak") out.schedule.lr_peak = value.get<double>();
        else if (key == "warmup_steps") out.schedule.warmup_steps = value.get<double>();
        else if (key == "plateau_steps") out.schedule.plateau_steps = value.get<double>();
        else if (key == "decay") out.schedule.decay = value.get<double>();
        else throw sqz::ConfigError("config: unknown key 'schedule." + key + "'");
      }
    } else if (section == "optimizer") {
      for (const auto& [key, value] : body.items()) {
        if (key == "beta1") out.optimizer.beta1 = value.get<double>();
        else if (key == "beta2") out.optimizer.beta2 = value.get<double>();
        else if (key == "eps") out.optimizer.eps = value.get<double>();
        else if (key == "weight_decay") out.optimizer.weight_decay = value.get<double>();
        else throw sqz::ConfigError("config: unknown key 'optimizer." + key + "'");
      }
    } else if (section == "task") {
      for (const auto& [key, value] : body.items()) {
        if (key == "vocab") out.task.vocab = value.get<int64_t>();
        else if (key == "label_len") out.task.label_len = value.get<int64_t>();
        else if (key == "upsample") out.task.upsample = value.get<int64_t>();
        else if (key == "feature_dim") out.task.feature_dim = value.get<int64_t>();
        else if (key == "noise") out.task.noise = value.get<double>();
        else if (key == "seed") out.task.seed = value.get<uint64_t>();
        else throw sqz::ConfigError("config: unknown key 'task." + key + "'");
      }
    } else {
      throw sqz::ConfigError("config: unknown section '" + section + "'");
    }
  }
  return out;
}

sqz::ModelConfig resolve_model(const std::string& preset_name,
                               const std::string& config_path) {
  if (!preset_name.empty() && !config_path.empty()) {
    throw sqz::ConfigError("config: use either --preset or --config, not both");
  }
  if (!config_path.empty()) return parse_config_file(config_path).model;
  if (!preset_name.empty()) return sqz::preset(preset_name);
  throw sqz::ConfigError("config: --preset or --config is required");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::string format_count(int64_t n) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%lld (%.2fM)", static_cast<long long>(n),
                static_cast<double>(n) / 1e6);
  return buf;
}

std::vector<sqz::TensorPtr> random_profile_inputs(int64_t n, int64_t frames,
                                                  int64_t dim, uint64_t seed) {
  std::vector<sqz::TensorPtr> out;
  sqz::Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    auto x = sqz::zeros({frames, dim});
    for (auto& v : x->data) v = rng.normal();
    out.push_back(x);
  }
  return out;
}

int cmd_params(const std::string& preset_name, const std::string& config_path,
               bool breakdown, const std::string& out_path) {
  auto cfg = resolve_model(preset_name, config_path);
  auto counts = sqz::count_params(cfg);
  std::ostringstream os;
  if (breakdown) {
    for (const auto& [name, n] : counts.entries) {
      os << name << "\t" << n << "\n";
    }
  }
  os << "total\t" << counts.total << "\n";
  std::cout << "params: " << format_count(counts.total) << "\n";
  if (breakdown) std::cout << os.str();
  if (!out_path.empty()) write_text(out_path, os.str());
  return kExitOk;
}

int cmd_flops(const std::string& preset_name, const std::string& config_path,
              double seconds, double frame_ms, bool breakdown,
              const std::string& out_path) {
  auto cfg = resolve_model(preset_name, config_path);
  auto report = sqz::count_flops(cfg, seconds, frame_ms);
  std::printf("flops: %.3f GFLOPs (%.3f GMACs) for %.1fs input\n",
              report.total_flops() / 1e9, report.total_macs() / 1e9, seconds);
  if (breakdown) std::cout << report.to_text();
  if (!out_path.empty()) write_text(out_path, report.to_json());
  return kExitOk;
}

int cmd_ablation(const std::string& size, double seconds,
                 const std::string& out_path) {
  std::string base;
  if (size == "s") base = "conformer-ctc-s";
  else if (size == "m") base = "conformer-ctc-m";
  else if (size == "l") base = "conformer-ctc-l";
  else throw sqz::ConfigError("ablation: unknown size '" + size + "' (use s, m or l)");
  auto ladder = sqz::ablation_ladder(sqz::preset(base));
  std::ostringstream os;
  os << "design change\tparams\tgflops\n";
  for (const auto& [name, cfg] : ladder) {
    const auto params = sqz::count_params(cfg).total;
    const auto flops = sqz::count_flops(cfg, seconds).total_flops();
    char line[160];
    std::snprintf(line, sizeof(line), "%s\t%.1fM\t%.1f\n", name.c_str(),
                  static_cast<double>(params) / 1e6, flops / 1e9);
    os << line;
  }
  std::cout << os.str();
  if (!out_path.empty()) write_text(out_path, os.str());
  return kExitOk;
}

int cmd_config(const std::string& preset_name) {
  std::cout << sqz::config_to_json(sqz::preset(preset_name)) << "\n";
  return kExitOk;
}

struct TrainFlags {
  std::string preset_name, config_path, task_name = "copy";
  std::string out_prefix, checkpoint_path;
  int64_t steps = 2000, batch = 8, eval_interval = 100, eval_samples = 32;
  int64_t checkpoint_interval = 0;
  int64_t vocab = 8, label_len = 6, upsample = 4, feature_dim = 16;
  double noise = 0.05;
  uint64_t seed = 1;
  double lr_peak = 2e-3, warmup = 200.0, plateau = 10000.0, decay = 1.0;
  double weight_decay = 5e-4;
  bool augment = false;
};

int cmd_train(const TrainFlags& f) {
  if (f.task_name != "copy") {
    throw sqz::ConfigError("train: unknown task '" + f.task_name +
                           "' (only 'copy' is available)");
  }
  CliConfig cli;
  if (!f.config_path.empty()) {
    cli = parse_config_file(f.config_path);
  } else {
    cli.model = sqz::preset(f.preset_name.empty() ? "tiny" : f.preset_name);
    cli.schedule = {f.lr_peak, f.warmup, f.plateau, f.decay};
    cli.optimizer.weight_decay = f.weight_decay;
    cli.task.vocab = f.vocab;
    cli.task.label_len = f.label_len;
    cli.task.upsample = f.upsample;
    cli.task.feature_dim = f.feature_dim;
    cli.task.noise = f.noise;
  }
  cli.model.vocab_size = cli.task.vocab;
  cli.model.input_feature_dim = cli.task.feature_dim;
  cli.task.seed = f.seed;

  auto model = sqz::build(cli.model, f.seed);
  sqz::TrainOptions opt;
  opt.steps = f.steps;
  opt.batch_size = f.batch;
  opt.eval_interval = f.eval_interval;
  opt.eval_samples = f.eval_samples;
  opt.seed = f.seed;
  opt.schedule = cli.schedule;
  opt.optimizer = cli.optimizer;
  opt.checkpoint_path = f.checkpoint_path;
  opt.checkpoint_interval = f.checkpoint_interval;
  opt.use_spec_augment = f.augment;

  auto log = sqz::train(model, cli.task, opt);
  std::printf("trained %lld steps, final accuracy %.4f\n",
              static_cast<long long>(log.steps_run), log.final_accuracy);
  if (!f.out_prefix.empty()) {
    write_text(f.out_prefix + ".log.jsonl", log.to_jsonl());
    std::ostringstream loss_os, acc_os;
    loss_os.precision(17);
    acc_os.precision(17);
    for (const auto& r : log.records) {
      loss_os << r.step << "\t" << r.loss << "\n";
      if (r.accuracy >= 0.0) acc_os << r.step << "\t" << r.accuracy << "\n";
    }
    write_text(f.out_prefix + ".loss.tsv", loss_os.str());
    write_text(f.out_prefix + ".acc.tsv", acc_os.str());
  }
  return kExitOk;
}

int cmd_profile(const std::string& checkpoint, int64_t inputs, int64_t frames,
                const std::string& distances_csv, uint64_t seed,
                const std::string& out_path) {
  auto model = sqz::load_checkpoint(checkpoint);
  std::vector<int64_t> distances;
  std::stringstream ss(distances_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    distances.push_back(std::stoll(item));
  }
  if (distances.empty()) {
    throw sqz::ConfigError("profile: --distances must name at least one distance");
  }
  auto xs = random_profile_inputs(inputs, frames,
                                  model.config.input_feature_dim, seed);
  auto profile = sqz::redundancy_profile(model, xs, distances);
  std::cout << profile.to_text();
  if (profile.inputs_skipped > 0) {
    std::cerr << "warning: skipped " << profile.inputs_skipped
              << " input(s) shorter than the largest distance\n";
  }
  if (!out_path.empty()) write_text(out_path, profile.to_text());
  return kExitOk;
}

int cmd_decode(const std::string& checkpoint, const std::string& input) {
  auto model = sqz::load_checkpoint(checkpoint);
  auto features = sqz::read_features(input);
  sqz::Graph g(false);
  sqz::Ctx ctx{g};
  auto logits = model.forward(ctx, features);
  const auto ids = sqz::ctc_greedy_decode(*logits);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) std::cout << " ";
    std::cout << ids[i];
  }
  std::cout << "\n";
  return kExitOk;
}

int cmd_gen(const std::string& out_path, const std::string& labels_out,
            int64_t vocab, int64_t label_len, int64_t upsample,
            int64_t feature_dim, double noise, uint64_t seed) {
  sqz::SyntheticTask task;
  task.vocab = vocab;
  task.label_len = label_len;
  task.upsample = upsample;
  task.feature_dim = feature_dim;
  task.noise = noise;
  task.seed = seed;
  auto samples = sqz::gen_synthetic(task, 1);
  sqz::write_features(out_path, *samples[0].features);
  std::ostringstream os;
  for (size_t i = 0; i < samples[0].labels.size(); ++i) {
    if (i) os << " ";
    os << samples[0].labels[i];
  }
  os << "\n";
  std::cout << os.str();
  if (!labels_out.empty()) write_text(labels_out, os.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Squeezeformer/Conformer encoder study kit"};
  app.require_subcommand(1);

  std::string preset_name, config_path, out_path;
  bool breakdown = false;

  auto* params = app.add_subcommand("params", "Count learnable parameters");
  params->add_option("--preset", preset_name, "Named configuration");
  params->add_option("--config", config_path, "JSON config file");
  params->add_flag("--breakdown", breakdown, "Per-module breakdown");
  params->add_option("--out", out_path, "Write the breakdown to a file");

  double seconds = 30.0, frame_ms = 10.0;
  auto* flops = app.add_subcommand("flops", "Analytic FLOPs report");
  flops->add_option("--preset", preset_name, "Named configuration");
  flops->add_option("--config", config_path, "JSON config file");
  flops->add_option("--seconds", seconds, "Input duration in seconds")
      ->check(CLI::PositiveNumber);
  flops->add_option("--frame-ms", frame_ms, "Frame hop in milliseconds")
      ->check(CLI::PositiveNumber);
  flops->add_flag("--breakdown", breakdown, "Per-module breakdown");
  flops->add_option("--out", out_path, "Write the JSON report to a file");

  std::string size = "m";
  auto* ablation = app.add_subcommand("ablation", "Six-step redesign ladder");
  ablation->add_option("--size", size, "Base model size: s, m or l");
  ablation->add_option("--seconds", seconds, "Input duration in seconds")
      ->check(CLI::PositiveNumber);
  ablation->add_option("--out", out_path, "Write the table to a file");

  auto* config_cmd = app.add_subcommand("config", "Print an expanded preset");
  config_cmd->add_option("--preset", preset_name, "Named configuration")
      ->required();

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train on a synthetic task");
  train_cmd->add_option("--preset", tf.preset_name, "Named configuration");
  train_cmd->add_option("--config", tf.config_path, "JSON config file");
  train_cmd->add_option("--task", tf.task_name, "Task name (copy)");
  train_cmd->add_option("--steps", tf.steps, "Training steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tf.batch, "Sequences per step")->check(CLI::PositiveNumber);
  train_cmd->add_option("--eval-interval", tf.eval_interval,
                        "Steps between held-out evaluations");
  train_cmd->add_option("--eval-samples", tf.eval_samples,
                        "Held-out sample count");
  train_cmd->add_option("--vocab", tf.vocab, "Task vocabulary size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--label-len", tf.label_len, "Labels per sequence")->check(CLI::PositiveNumber);
  train_cmd->add_option("--upsample", tf.upsample, "Frames per label")->check(CLI::PositiveNumber);
  train_cmd->add_option("--feature-dim", tf.feature_dim, "Feature width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--noise", tf.noise, "Gaussian feature noise");
  train_cmd->add_option("--seed", tf.seed, "Master seed");
  train_cmd->add_option("--lr-peak", tf.lr_peak, "Peak learning rate");
  train_cmd->add_option("--warmup", tf.warmup, "Warmup steps");
  train_cmd->add_option("--plateau", tf.plateau, "Steps at the peak rate");
  train_cmd->add_option("--decay", tf.decay, "Polynomial decay rate");
  train_cmd->add_option("--weight-decay", tf.weight_decay,
                        "Decoupled weight decay");
  train_cmd->add_flag("--spec-augment", tf.augment, "Mask training batches");
  train_cmd->add_option("--out", tf.out_prefix,
                        "Prefix for .log.jsonl/.loss.tsv/.acc.tsv outputs");
  train_cmd->add_option("--checkpoint", tf.checkpoint_path,
                        "Write the final checkpoint here");
  train_cmd->add_option("--checkpoint-interval", tf.checkpoint_interval,
                        "Also checkpoint every N steps (suffix .N)");

  std::string checkpoint, input_path, distances = "1,2,3,4";
  int64_t inputs = 10, frames = 256;
  uint64_t seed = 1;
  std::string labels_out;
  auto* profile = app.add_subcommand("profile", "Temporal redundancy profile");
  profile->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required();
  profile->add_option("--inputs", inputs, "Random input count")->check(CLI::PositiveNumber);
  profile->add_option("--frames", frames, "Frames per random input")->check(CLI::PositiveNumber);
  profile->add_option("--distances", distances, "Comma-separated distances");
  profile->add_option("--seed", seed, "Input generator seed");
  profile->add_option("--out", out_path, "Write the profile to a file");

  auto* decode = app.add_subcommand("decode", "Greedy-decode a feature file");
  decode->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required();
  decode->add_option("--input", input_path, "Feature file")->required();

  auto* gen = app.add_subcommand("gen", "Write a synthetic feature file");
  gen->add_option("--out", out_path, "Feature file to write")->required();
  gen->add_option("--labels-out", labels_out, "Write reference labels here");
  gen->add_option("--vocab", tf.vocab, "Task vocabulary size")->check(CLI::PositiveNumber);
  gen->add_option("--label-len", tf.label_len, "Labels in the sequence")->check(CLI::PositiveNumber);
  gen->add_option("--upsample", tf.upsample, "Frames per label")->check(CLI::PositiveNumber);
  gen->add_option("--feature-dim", tf.feature_dim, "Feature width")->check(CLI::PositiveNumber);
  gen->add_option("--noise", tf.noise, "Gaussian feature noise");
  gen->add_option("--seed", seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (params->parsed()) {
      return cmd_params(preset_name, config_path, breakdown, out_path);
    }
    if (flops->parsed()) {
      return cmd_flops(preset_name, config_path, seconds, frame_ms, breakdown,
                       out_path);
    }
    if (ablation->parsed()) return cmd_ablation(size, seconds, out_path);
    if (config_cmd->parsed()) return cmd_config(preset_name);
    if (train_cmd->parsed()) return cmd_train(tf);
    if (profile->parsed()) {
      return cmd_profile(checkpoint, inputs, frames, distances, seed, out_path);
    }
    if (decode->parsed()) return cmd_decode(checkpoint, input_path);
    if (gen->parsed()) {
      return cmd_gen(out_path, labels_out, tf.vocab, tf.label_len, tf.upsample,
                     tf.feature_dim, tf.noise, seed);
    }
  } catch (const sqz::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
