#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "rsyn/dsp.hpp"
#include "rsyn/model.hpp"
#include "rsyn/synth.hpp"
#include "rsyn/train.hpp"

namespace rsyn::cli {

// Everything a subcommand may consume. Built as defaults, then the --config
// file, then explicit flags.
struct CliConfig {
  std::string command;
  PreprocessConfig preprocess;
  ModelConfig model;
  TrainConfig train;
  Recipe recipe;
  std::uint64_t seed = 0;
  int verbosity = 0;
  std::string data_dir;
  nlohmann::json paths = nlohmann::json::object();  // resolved input/output paths

  // The sections the command consumes.
  nlohmann::json to_json() const;
  // Validates every section against its module. Throws ConfigError.
  void validate() const;
};

nlohmann::json preprocess_to_json(const PreprocessConfig& c);
// Starts from `base`; only keys present in j are replaced. Unknown keys throw.
PreprocessConfig preprocess_from_json(const nlohmann::json& j, PreprocessConfig base = {});

// Layers a config file over cfg. Sections: preprocess, model, train, recipe,
// plus top-level seed. Throws ConfigError on unknown sections or keys.
void apply_config_file(CliConfig& cfg, const std::string& path);
void apply_config_json(CliConfig& cfg, const nlohmann::json& j);

// Relative paths resolve against data_dir when it is set.
std::string resolve(const CliConfig& cfg, const std::string& path);

}  // namespace rsyn::cli
