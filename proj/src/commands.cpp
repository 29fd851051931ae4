#include "recam/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "recam/bench.hpp"
#include "recam/config.hpp"
#include "recam/errors.hpp"
#include "recam/ioutil.hpp"
#include "recam/metrics.hpp"
#include "recam/train.hpp"

namespace recam::cli {

namespace {

namespace fs = std::filesystem;

std::string default_out_dir() {
  const char* env = std::getenv("RECAM_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::pair<std::string, std::string> split_override(const std::string& text) {
  const size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects section.key=value, got '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::string val_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (!args.data_path.empty()) overrides.emplace_back("run.train_data", args.data_path);
  if (!args.val_path.empty()) overrides.emplace_back("run.val_data", args.val_path);
  if (!args.out_dir.empty()) overrides.emplace_back("run.out_dir", args.out_dir);
  if (!args.seed.empty()) overrides.emplace_back("run.seed", args.seed);
  for (const std::string& s : args.sets) overrides.push_back(split_override(s));

  config::RunConfig cfg = config::RunConfig::load(args.config_path, overrides);
  if (cfg.train_data.empty()) {
    throw ConfigError("run.train_data: no training data (use --data or the config file)");
  }
  const std::vector<data::RecamSample> train_samples = data::load_jsonl(cfg.train_data);
  const std::vector<data::RecamSample> val_samples =
      cfg.val_data.empty() ? train_samples : data::load_jsonl(cfg.val_data);

  const data::Vocab vocab = data::Vocab::build(train_samples, cfg.min_count);
  cfg.model.vocab_size = vocab.size();
  cfg.model.validate();

  const train::PreparedSet train_set = train::prepare(train_samples, vocab, cfg.model);
  const train::PreparedSet val_set = train::prepare(val_samples, vocab, cfg.model);

  model::ModelParams params = model::ModelParams::init(cfg.model, cfg.seed);
  const train::TrainResult result =
      train::train(cfg.model, params, train_set, val_set, cfg.train);

  fs::create_directories(cfg.out_dir);
  nlohmann::ordered_json extra;
  extra["total_steps"] = result.total_steps;
  extra["best_step"] = result.best_step;
  extra["best_val_accuracy"] = result.best_val_accuracy;
  extra["best_val_loss"] = result.best_val_loss;
  save_model(join_path(cfg.out_dir, "checkpoint.rckp"), cfg.model, params, vocab,
             extra);
  ioutil::write_text_file(join_path(cfg.out_dir, "history.csv"),
                          train::history_csv(result.history));
  ioutil::write_text_file(join_path(cfg.out_dir, "resolved.ini"), cfg.to_ini());

  nlohmann::ordered_json summary = extra;
  summary["out_dir"] = cfg.out_dir;
  summary["history_rows"] = result.history.size();
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_path;
  std::string out_dir;
};

int cmd_eval(const EvalArgs& args) {
  const LoadedModel lm = load_model(args.checkpoint);
  const std::vector<data::RecamSample> samples = data::load_jsonl(args.data_path);
  const train::PreparedSet set = train::prepare(samples, lm.vocab, lm.config);
  const train::EvalOutcome outcome = train::evaluate(lm.config, lm.params, set);
  nlohmann::ordered_json report = outcome.metrics.to_json();
  report["mean_loss"] = outcome.mean_loss;
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    ioutil::write_text_file(join_path(args.out_dir, "metrics.json"), text);
  }
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string data_path;
  std::string out_dir;
};

int cmd_predict(const PredictArgs& args) {
  const LoadedModel lm = load_model(args.checkpoint);
  const std::vector<data::RecamSample> samples = data::load_jsonl(args.data_path);
  const train::PreparedSet set = train::prepare(samples, lm.vocab, lm.config);
  fs::create_directories(args.out_dir);
  train::predict_file(lm.config, lm.params, set,
                      join_path(args.out_dir, "predictions.csv"),
                      join_path(args.out_dir, "predictions.jsonl"));
  nlohmann::ordered_json summary;
  summary["samples"] = samples.size();
  summary["out_dir"] = args.out_dir;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct BenchArgs {
  std::vector<int64_t> lengths;
  std::vector<std::string> kernels;
  int64_t window = 32;
  int64_t globals = 16;
  int64_t reps = 3;
  int64_t d = 64;
  int64_t heads = 2;
  int64_t budget_mb = 2048;
  uint64_t seed = 12345;
  std::string out_dir;
};

int cmd_bench(const BenchArgs& args) {
  bench::BenchConfig bc;
  if (!args.lengths.empty()) bc.lengths = args.lengths;
  if (!args.kernels.empty()) {
    bc.kernels.clear();
    for (const std::string& k : args.kernels) bc.kernels.push_back(attn::kernel_from_string(k));
  }
  bc.window = args.window;
  bc.globals = args.globals;
  bc.reps = args.reps;
  bc.d = args.d;
  bc.heads = args.heads;
  bc.memory_budget_bytes = args.budget_mb * (1LL << 20);
  bc.seed = args.seed;

  const bench::BenchReport report = bench::run_bench(bc);
  fs::create_directories(args.out_dir);
  ioutil::write_text_file(join_path(args.out_dir, "bench.csv"), report.to_csv());
  ioutil::write_text_file(join_path(args.out_dir, "bench.json"),
                          report.to_json().dump(2) + "\n");
  nlohmann::ordered_json summary;
  summary["count_exponent"] = report.count_exponent;
  summary["time_exponent"] = report.time_exponent;
  summary["out_dir"] = args.out_dir;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct GenArgs {
  int64_t count = 0;
  uint64_t seed = 42;
  std::string out_path;
  int64_t vocab = 50;
  int64_t passage_len = 60;
};

int cmd_gen(const GenArgs& args) {
  const std::vector<data::RecamSample> samples =
      data::generate_synthetic(args.count, args.vocab, args.passage_len, args.seed);
  data::write_jsonl(samples, args.out_path);
  const data::DatasetStats st = data::dataset_stats(samples);
  nlohmann::ordered_json summary;
  summary["count"] = args.count;
  summary["out"] = args.out_path;
  summary["label_histogram"] = st.label_histogram;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_stats(const std::string& data_path) {
  const std::vector<data::RecamSample> samples = data::load_jsonl(data_path);
  const data::DatasetStats st = data::dataset_stats(samples);
  nlohmann::ordered_json j;
  j["samples"] = st.samples;
  j["labeled"] = st.labeled;
  j["label_histogram"] = st.label_histogram;
  j["passage_tokens_max"] = st.passage_tokens_max;
  j["passage_tokens_mean"] = st.passage_tokens_mean;
  j["question_tokens_max"] = st.question_tokens_max;
  j["question_tokens_mean"] = st.question_tokens_mean;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

void save_model(const std::string& path, const model::ModelConfig& config,
                model::ModelParams& params, const data::Vocab& vocab,
                const nlohmann::json& extra_meta) {
  nlohmann::json meta;
  meta["format"] = "recam-model";
  meta["model"] = config.to_json();
  meta["vocab"] = vocab.to_json();
  if (!extra_meta.empty()) meta["run"] = extra_meta;
  ckpt::save(path, meta, params.named_tensors());
}

LoadedModel load_model(const std::string& path) {
  const ckpt::Loaded file = ckpt::load(path);
  if (!file.meta.contains("model") || !file.meta.contains("vocab")) {
    throw ParseError("checkpoint '" + path + "' lacks embedded model/vocab metadata");
  }
  LoadedModel lm;
  lm.meta = file.meta;
  lm.config = model::ModelConfig::from_json(file.meta.at("model"));
  lm.vocab = data::Vocab::from_json(file.meta.at("vocab"));
  if (lm.vocab.size() != lm.config.vocab_size) {
    throw ConfigError("checkpoint '" + path + "': embedded vocabulary of " +
                      std::to_string(lm.vocab.size()) +
                      " tokens does not match model vocab_size " +
                      std::to_string(lm.config.vocab_size));
  }
  lm.params = model::ModelParams::init(lm.config, 0);
  for (auto& [name, t] : lm.params.named_tensors()) {
    const Tensor* src = file.find(name);
    if (src == nullptr) {
      throw ParseError("checkpoint '" + path + "' is missing tensor '" + name + "'");
    }
    if (src->shape() != t.shape()) {
      throw ParseError("checkpoint '" + path + "': tensor '" + name +
                       "' has shape " + src->shape_str() + ", expected " +
                       t.shape_str());
    }
    t.data() = src->data();
  }
  return lm;
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Long-document multiple-choice reading comprehension toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Fine-tune a model");
  train_cmd->add_option("--config", train_args.config_path, "Run configuration file");
  train_cmd->add_option("--data", train_args.data_path, "Training JSONL");
  train_cmd->add_option("--val", train_args.val_path,
                        "Validation JSONL (defaults to the training data)");
  train_cmd->add_option("--out", train_args.out_dir, "Output directory");
  train_cmd->add_option("--seed", train_args.seed, "Run seed");
  train_cmd->add_option("--set", train_args.sets,
                        "Override any config key: section.key=value");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--data", eval_args.data_path, "Labeled JSONL")->required();
  eval_cmd->add_option("--out", eval_args.out_dir, "Also write metrics.json here");

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Write predictions");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "Model checkpoint")
      ->required();
  predict_cmd->add_option("--data", predict_args.data_path, "Input JSONL")->required();
  predict_cmd->add_option("--out", predict_args.out_dir, "Output directory");

  BenchArgs bench_args;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Attention-kernel scaling benchmark");
  bench_cmd->add_option("--lengths", bench_args.lengths, "Sequence lengths");
  bench_cmd->add_option("--kernels", bench_args.kernels,
                        "Kernels: dense windowed windowed_global");
  bench_cmd->add_option("--window", bench_args.window, "Attention window");
  bench_cmd->add_option("--globals", bench_args.globals, "Global positions");
  bench_cmd->add_option("--reps", bench_args.reps, "Timing repetitions");
  bench_cmd->add_option("--d", bench_args.d, "Model width");
  bench_cmd->add_option("--heads", bench_args.heads, "Attention heads");
  bench_cmd->add_option("--budget-mb", bench_args.budget_mb,
                        "Attention-buffer memory budget (MiB)");
  bench_cmd->add_option("--seed", bench_args.seed, "Parameter/input seed");
  bench_cmd->add_option("--out", bench_args.out_dir, "Output directory");

  GenArgs gen_args;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate synthetic data");
  gen_cmd->add_option("--count", gen_args.count, "Samples to generate")->required();
  gen_cmd->add_option("--seed", gen_args.seed, "Generator seed");
  gen_cmd->add_option("--out", gen_args.out_path, "Output JSONL path")->required();
  gen_cmd->add_option("--vocab", gen_args.vocab, "Filler vocabulary size");
  gen_cmd->add_option("--passage-len", gen_args.passage_len, "Passage length in words");

  std::string stats_data;
  CLI::App* stats_cmd = app.add_subcommand("stats", "Describe a dataset");
  stats_cmd->add_option("--data", stats_data, "Input JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (predict_args.out_dir.empty()) predict_args.out_dir = default_out_dir();
    if (bench_args.out_dir.empty()) bench_args.out_dir = default_out_dir();
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*predict_cmd) return cmd_predict(predict_args);
    if (*bench_cmd) return cmd_bench(bench_args);
    if (*gen_cmd) return cmd_gen(gen_args);
    if (*stats_cmd) return cmd_stats(stats_data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("recam");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace recam::cli
