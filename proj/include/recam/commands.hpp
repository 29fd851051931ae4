#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/checkpoint.hpp"
#include "recam/data.hpp"
#include "recam/model.hpp"

namespace recam::cli {

// Entry point behind the binary: verbs train, eval, predict, bench, gen,
// stats. Returns the process exit status (0 success, nonzero on usage or
// execution errors; messages go to stderr).
int cli_main(int argc, const char* const* argv);

// Convenience wrapper for in-process invocation: args exclude the program
// name, e.g. run({"gen", "--count", "10", "--out", "x.jsonl"}).
int run(const std::vector<std::string>& args);

// Self-describing model file: the checkpoint's metadata embeds the model
// configuration and the vocabulary alongside the tensors.
void save_model(const std::string& path, const model::ModelConfig& config,
                model::ModelParams& params, const data::Vocab& vocab,
                const nlohmann::json& extra_meta = nlohmann::json::object());

struct LoadedModel {
  model::ModelConfig config;
  model::ModelParams params;
  data::Vocab vocab;
  nlohmann::json meta;
};

// Rebuilds config, vocabulary and parameters from a checkpoint; throws
// ParseError on missing tensors and ConfigError when the embedded
// vocabulary disagrees with the embedded model configuration.
LoadedModel load_model(const std::string& path);

}  // namespace recam::cli
