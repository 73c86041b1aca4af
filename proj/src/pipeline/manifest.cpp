#include "safenav/pipeline/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "safenav/common/io.hpp"
#include "safenav/pipeline/config_io.hpp"
#include "safenav/tubesim/tube.hpp"

namespace safenav::pipeline {

using nlohmann::json;

namespace {

bool is_builtin_tube(const std::string& id) {
  const auto ids = sim::builtin_tube_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::string resolve_path(const std::string& value, const std::filesystem::path& base_dir) {
  const std::filesystem::path p(value);
  if (p.is_absolute() || base_dir.empty()) return value;
  return (base_dir / p).lexically_normal().string();
}

}  // namespace

void RunManifest::validate() const {
  if (run_id.empty()) throw FormatError("manifest: run_id must not be empty");
  for (char c : run_id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
      throw FormatError("manifest: run_id '" + run_id + "' may only contain letters, digits, '-', '_' and '.'");
  if (methods.empty()) throw FormatError("manifest: at least one method is required");
  if (std::set<train::Method>(methods.begin(), methods.end()).size() != methods.size())
    throw FormatError("manifest: methods must be distinct");
  if (seeds.empty()) throw FormatError("manifest: seed list must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw FormatError("manifest: seeds must be distinct");
  if (eval_tubes.empty()) throw FormatError("manifest: eval_tubes must not be empty");
  if (std::find(eval_tubes.begin(), eval_tubes.end(), train_tube) == eval_tubes.end())
    throw FormatError("manifest: training tube '" + train_tube + "' must be one of the eval_tubes");
  if (top_m < 0) throw FormatError("manifest: top_m must be non-negative");
  if (eval_episodes < 1) throw FormatError("manifest: eval_episodes must be positive");
}

RunManifest manifest_from_json(const std::string& text, const std::string& source,
                               const std::filesystem::path& base_dir,
                               const ToolkitConfig& defaults) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError(source + ": manifest must be an object");
  RunManifest m;
  m.env = defaults.env;
  m.train = defaults.train;
  m.verifier = defaults.verifier;
  bool have_seeds = false;
  std::int64_t seed_count = -1;
  std::uint64_t seed_start = 0;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "run_id") {
        m.run_id = value.get<std::string>();
      } else if (key == "method") {
        m.methods = {train::method_from_string(value.get<std::string>())};
      } else if (key == "methods") {
        m.methods.clear();
        for (const auto& v : value) m.methods.push_back(train::method_from_string(v.get<std::string>()));
      } else if (key == "seeds") {
        m.seeds = value.get<std::vector<std::uint64_t>>();
        have_seeds = true;
      } else if (key == "seed_count") {
        seed_count = value.get<std::int64_t>();
      } else if (key == "seed_start") {
        seed_start = value.get<std::uint64_t>();
      } else if (key == "train_tube") {
        m.train_tube = value.get<std::string>();
      } else if (key == "eval_tubes") {
        m.eval_tubes = value.get<std::vector<std::string>>();
      } else if (key == "top_m") {
        m.top_m = value.get<int>();
      } else if (key == "eval_episodes") {
        m.eval_episodes = value.get<int>();
      } else if (key == "eval_seed") {
        m.eval_seed = value.get<std::uint64_t>();
      } else if (key == "properties") {
        m.properties = value.get<std::string>();
      } else if (key == "output_dir") {
        m.output_dir = value.get<std::string>();
      } else if (key == "env") {
        merge_from_json(value, m.env, source + ": env");
      } else if (key == "train") {
        merge_from_json(value, m.train, source + ": train");
      } else if (key == "verifier") {
        merge_from_json(value, m.verifier, source + ": verifier");
      } else {
        throw FormatError(source + ": unknown manifest key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (seed_count >= 0) {
    if (have_seeds) throw FormatError(source + ": give either 'seeds' or 'seed_count', not both");
    for (std::int64_t i = 0; i < seed_count; ++i) m.seeds.push_back(seed_start + static_cast<std::uint64_t>(i));
  }
  if (!is_builtin_tube(m.train_tube)) m.train_tube = resolve_path(m.train_tube, base_dir);
  for (auto& t : m.eval_tubes)
    if (!is_builtin_tube(t)) t = resolve_path(t, base_dir);
  if (m.properties != "builtin") m.properties = resolve_path(m.properties, base_dir);
  try {
    m.validate();
  } catch (const FormatError& e) {
    throw FormatError(source + ": " + e.what());
  }
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path, const ToolkitConfig& defaults) {
  return manifest_from_json(read_text_file(path), path.string(), path.parent_path(), defaults);
}

std::string manifest_to_json(const RunManifest& m) {
  json methods = json::array();
  for (auto method : m.methods) methods.push_back(train::to_string(method));
  json doc = {{"run_id", m.run_id},
              {"methods", methods},
              {"seeds", m.seeds},
              {"train_tube", m.train_tube},
              {"eval_tubes", m.eval_tubes},
              {"top_m", m.top_m},
              {"eval_episodes", m.eval_episodes},
              {"eval_seed", m.eval_seed},
              {"properties", m.properties},
              {"output_dir", m.output_dir},
              {"env", to_json(m.env)},
              {"train", to_json(m.train)},
              {"verifier", to_json(m.verifier)}};
  return doc.dump(2) + "\n";
}

}  // namespace safenav::pipeline
