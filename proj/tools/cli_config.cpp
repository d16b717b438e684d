#include "cli_config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsyn/error.hpp"

namespace rsyn::cli {

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("config section '" + section + "': unknown key '" + key + "'");
  }
}

nlohmann::json merged(nlohmann::json base, const nlohmann::json& patch) {
  base.merge_patch(patch);
  return base;
}

}  // namespace

nlohmann::json preprocess_to_json(const PreprocessConfig& c) {
  return {{"window", c.window}, {"hop", c.hop}, {"mocap_rate", c.mocap_rate}, {"radar_rate", c.radar_rate},
          {"hann", c.hann}};
}

PreprocessConfig preprocess_from_json(const nlohmann::json& j, PreprocessConfig base) {
  reject_unknown(j, preprocess_to_json(base), "preprocess");
  try {
    if (j.contains("window")) base.window = j.at("window").get<std::size_t>();
    if (j.contains("hop")) base.hop = j.at("hop").get<std::size_t>();
    if (j.contains("mocap_rate")) base.mocap_rate = j.at("mocap_rate").get<double>();
    if (j.contains("radar_rate")) base.radar_rate = j.at("radar_rate").get<double>();
    if (j.contains("hann")) base.hann = j.at("hann").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("preprocess config: ") + e.what());
  }
  return base;
}

nlohmann::json CliConfig::to_json() const {
  nlohmann::json j{{"command", command}, {"seed", seed}, {"data_dir", data_dir}, {"paths", paths}};
  if (command == "synth") j["recipe"] = recipe.to_json();
  if (command == "preprocess" || command == "train" || command == "ablate" || command == "infer") {
    j["preprocess"] = preprocess_to_json(preprocess);
  }
  if (command == "train" || command == "ablate" || command == "infer") j["model"] = model.to_json();
  if (command == "train" || command == "ablate") j["train"] = train.to_json();
  return j;
}

void CliConfig::validate() const {
  preprocess.validate();
  model.validate();
  train.validate();
  recipe.validate();
}

void apply_config_json(CliConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  if (j.contains("train") && j["train"].is_object() && j["train"].contains("seed") && !j.contains("seed")) {
    cfg.seed = TrainConfig::from_json(j["train"]).seed;
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "preprocess") {
      cfg.preprocess = preprocess_from_json(value, cfg.preprocess);
    } else if (key == "model") {
      const auto base = cfg.model.to_json();
      reject_unknown(value, base, "model");
      cfg.model = ModelConfig::from_json(merged(base, value));
    } else if (key == "train") {
      const auto base = cfg.train.to_json();
      reject_unknown(value, base, "train");
      cfg.train = TrainConfig::from_json(merged(base, value));
    } else if (key == "recipe") {
      cfg.recipe = Recipe::from_json(merged(cfg.recipe.to_json(), value));
    } else if (key == "seed") {
      try {
        cfg.seed = value.get<std::uint64_t>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config seed: ") + e.what());
      }
    } else {
      throw ConfigError("config file: unknown section '" + key + "'");
    }
  }
}

void apply_config_file(CliConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  apply_config_json(cfg, j);
}

std::string resolve(const CliConfig& cfg, const std::string& path) {
  if (path.empty() || cfg.data_dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(cfg.data_dir) / p).string();
}

}  // namespace rsyn::cli
