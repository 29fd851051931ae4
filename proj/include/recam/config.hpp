#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "recam/model.hpp"
#include "recam/train.hpp"

namespace recam::config {

// The merged run configuration: model + training + data settings plus run
// plumbing (seed, data paths, output directory). Values resolve in the order
// default -> config file -> flag override, and every key records which stage
// set it. The fully resolved configuration serializes back to the same
// file format, so a run can be replayed from the file it wrote.
struct RunConfig {
  model::ModelConfig model;  // vocab_size is derived from data, not a key
  train::TrainConfig train;
  int64_t min_count = 1;  // vocabulary frequency threshold
  uint64_t seed = 42;     // model init + training; mirrored into train.seed
  std::string out_dir;    // default: $RECAM_OUT_DIR, else "."
  std::string train_data;
  std::string val_data;

  std::map<std::string, std::string> provenance;  // "section.key" -> stage

  // Parses the file (empty path = defaults only), applies overrides as
  // "section.key" = value pairs, then finalizes: in dense mode an untouched
  // max_seq_len drops to the conventional 512 cap. Unknown keys, bad values,
  // and malformed lines throw ConfigError naming the offender.
  static RunConfig load(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>&
                            overrides = {});

  // The resolved configuration in file format, every key present, each
  // annotated with its provenance comment.
  std::string to_ini() const;
};

// All recognized keys in emission order (section-qualified).
const std::vector<std::string>& known_keys();

}  // namespace recam::config
