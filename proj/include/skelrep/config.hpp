#pragma once

#include <json.hpp>
#include <string>

#include "skelrep/eval.hpp"
#include "skelrep/trainer.hpp"

namespace skelrep {

struct DataConfig {
  int n_train = 8000;
  int n_test = 2000;
  CorruptionSpec corruption;
};

// One document drives every subcommand; sub-structs mirror the module
// configs. Parsing is strict: unknown keys anywhere are an error, so typos
// cannot silently fall back to defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string topology_file;  // empty = built-in 17-joint human template
  DaeConfig model;
  TrainConfig train;  // seed and threads mirror the top level
  DataConfig data;
  ActionSpec actions;
  LstmConfig classifier;  // seed mirrors the top level

  SkeletonTopology topology() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Canonical full echo: every field, default or not, in sorted-key order.
nlohmann::json to_json(const RunConfig& c);
std::uint64_t config_hash(const RunConfig& c);

}  // namespace skelrep
