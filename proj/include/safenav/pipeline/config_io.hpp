#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "safenav/crltrain/ppo.hpp"
#include "safenav/reluverify/verifier.hpp"
#include "safenav/tubesim/simulator.hpp"

namespace safenav::pipeline {

// Section readers merge the keys present in `doc` over `config` and reject
// unknown keys; `where` prefixes error messages.
nlohmann::json to_json(const sim::EnvConfig& config);
void merge_from_json(const nlohmann::json& doc, sim::EnvConfig& config, const std::string& where);

nlohmann::json to_json(const train::TrainConfig& config);
void merge_from_json(const nlohmann::json& doc, train::TrainConfig& config, const std::string& where);

nlohmann::json to_json(const verify::VerifierConfig& config);
void merge_from_json(const nlohmann::json& doc, verify::VerifierConfig& config, const std::string& where);

// Layered settings file: {"env": {...}, "train": {...}, "verifier": {...}}.
// Every section and key is optional; omitted values keep their defaults.
struct ToolkitConfig {
  sim::EnvConfig env;
  train::TrainConfig train;
  verify::VerifierConfig verifier;
};

nlohmann::json to_json(const ToolkitConfig& config);
ToolkitConfig toolkit_config_from_json(const std::string& text, const std::string& source,
                                       ToolkitConfig base = {});
ToolkitConfig load_toolkit_config(const std::filesystem::path& path, ToolkitConfig base = {});

}  // namespace safenav::pipeline
