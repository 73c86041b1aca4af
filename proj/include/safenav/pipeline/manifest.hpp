#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "safenav/crltrain/ppo.hpp"
#include "safenav/pipeline/config_io.hpp"
#include "safenav/reluverify/verifier.hpp"
#include "safenav/tubesim/simulator.hpp"

namespace safenav::pipeline {

struct RunManifest {
  std::string run_id;
  std::vector<train::Method> methods = {train::Method::kPpo, train::Method::kLppo};
  std::vector<std::uint64_t> seeds;
  std::string train_tube = "tube3";
  std::vector<std::string> eval_tubes = {"tube0", "tube1", "tube2", "tube3"};
  int top_m = 10;
  int eval_episodes = 20;
  std::uint64_t eval_seed = 0;
  // "builtin" or a property file path.
  std::string properties = "builtin";
  sim::EnvConfig env;
  train::TrainConfig train;
  verify::VerifierConfig verifier;
  std::string output_dir = "runs";

  // Throws FormatError naming the offending field.
  void validate() const;
};

// Accepts either "method" or "methods", and either "seeds" or
// "seed_count" (+ optional "seed_start"). Relative tube and property paths
// are resolved against `base_dir`. Sections the manifest leaves out keep the
// values of `defaults`.
RunManifest manifest_from_json(const std::string& text, const std::string& source,
                               const std::filesystem::path& base_dir = {},
                               const ToolkitConfig& defaults = {});
RunManifest load_manifest(const std::filesystem::path& path, const ToolkitConfig& defaults = {});

// Canonical form: every field spelled out, seeds listed.
std::string manifest_to_json(const RunManifest& manifest);

}  // namespace safenav::pipeline
