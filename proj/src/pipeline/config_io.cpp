#include "safenav/pipeline/config_io.hpp"

#include <functional>
#include <map>
#include <stdexcept>

#include "safenav/common/io.hpp"

namespace safenav::pipeline {

using nlohmann::json;

namespace {

// Name -> (read, write) pairs for one config struct.
class FieldTable {
 public:
  using Reader = std::function<void(const json&)>;
  using Writer = std::function<json()>;

  template <typename T>
  FieldTable& add(const std::string& name, T& field) {
    fields_[name] = {[&field](const json& v) { field = v.get<T>(); }, [&field] { return json(field); }};
    order_.push_back(name);
    return *this;
  }
  FieldTable& add_custom(const std::string& name, Reader read, Writer write) {
    fields_[name] = {std::move(read), std::move(write)};
    order_.push_back(name);
    return *this;
  }

  json dump() const {
    json out = json::object();
    for (const auto& name : order_) out[name] = fields_.at(name).second();
    return out;
  }

  void merge(const json& doc, const std::string& where) const {
    if (!doc.is_object()) throw FormatError(where + ": expected an object");
    for (const auto& [key, value] : doc.items()) {
      const auto it = fields_.find(key);
      if (it == fields_.end()) throw FormatError(where + ": unknown key '" + key + "'");
      try {
        it->second.first(value);
      } catch (const json::exception& e) {
        throw FormatError(where + "." + key + ": " + e.what());
      } catch (const std::invalid_argument& e) {
        throw FormatError(where + "." + key + ": " + e.what());
      }
    }
  }

 private:
  std::map<std::string, std::pair<Reader, Writer>> fields_;
  std::vector<std::string> order_;
};

FieldTable env_fields(sim::EnvConfig& c) {
  FieldTable t;
  t.add("linear_velocity", c.linear_velocity)
      .add("angular_step", c.angular_step)
      .add("eta", c.eta)
      .add("beta", c.beta)
      .add("horizon", c.horizon)
      .add("goal_threshold", c.goal_threshold)
      .add("camera_fov", c.camera_fov)
      .add("view_depth", c.view_depth)
      .add("capsule_radius", c.capsule_radius)
      .add("reset_lateral_jitter", c.reset_lateral_jitter)
      .add("reset_angular_jitter", c.reset_angular_jitter);
  return t;
}

FieldTable train_fields(train::TrainConfig& c) {
  FieldTable t;
  t.add_custom(
       "method", [&c](const json& v) { c.method = train::method_from_string(v.get<std::string>()); },
       [&c] { return json(train::to_string(c.method)); })
      .add("gamma", c.gamma)
      .add("gae_lambda", c.gae_lambda)
      .add("clip_epsilon", c.clip_epsilon)
      .add("policy_lr", c.policy_lr)
      .add("value_lr", c.value_lr)
      .add("entropy_coef", c.entropy_coef)
      .add("rollout_steps", c.rollout_steps)
      .add("epochs_per_update", c.epochs_per_update)
      .add("minibatch_size", c.minibatch_size)
      .add("total_episodes", c.total_episodes)
      .add("max_grad_norm", c.max_grad_norm)
      .add("cost_threshold", c.cost_threshold)
      .add("lambda_lr", c.lambda_lr)
      .add("lambda_init", c.lambda_init)
      .add("hidden", c.hidden);
  return t;
}

FieldTable verifier_fields(verify::VerifierConfig& c) {
  FieldTable t;
  t.add("max_depth", c.max_depth)
      .add("attack_restarts", c.attack_restarts)
      .add("attack_steps", c.attack_steps)
      .add_custom(
          "split_heuristic",
          [&c](const json& v) { c.split_heuristic = verify::split_heuristic_from_string(v.get<std::string>()); },
          [&c] { return json(verify::to_string(c.split_heuristic)); })
      .add("stability_tolerance", c.stability_tolerance)
      .add("max_subproblems", c.max_subproblems)
      .add("seed", c.seed);
  return t;
}

}  // namespace

json to_json(const sim::EnvConfig& config) {
  auto copy = config;
  return env_fields(copy).dump();
}

void merge_from_json(const json& doc, sim::EnvConfig& config, const std::string& where) {
  sim::EnvConfig next = config;
  env_fields(next).merge(doc, where);
  try {
    next.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  config = next;
}

json to_json(const train::TrainConfig& config) {
  auto copy = config;
  return train_fields(copy).dump();
}

void merge_from_json(const json& doc, train::TrainConfig& config, const std::string& where) {
  train::TrainConfig next = config;
  train_fields(next).merge(doc, where);
  try {
    next.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  config = next;
}

json to_json(const verify::VerifierConfig& config) {
  auto copy = config;
  return verifier_fields(copy).dump();
}

void merge_from_json(const json& doc, verify::VerifierConfig& config, const std::string& where) {
  verify::VerifierConfig next = config;
  verifier_fields(next).merge(doc, where);
  try {
    next.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  config = next;
}

json to_json(const ToolkitConfig& config) {
  return {{"env", to_json(config.env)}, {"train", to_json(config.train)}, {"verifier", to_json(config.verifier)}};
}

ToolkitConfig toolkit_config_from_json(const std::string& text, const std::string& source,
                                       ToolkitConfig base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError(source + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "env") {
      merge_from_json(value, base.env, source + ": env");
    } else if (key == "train") {
      merge_from_json(value, base.train, source + ": train");
    } else if (key == "verifier") {
      merge_from_json(value, base.verifier, source + ": verifier");
    } else {
      throw FormatError(source + ": unknown section '" + key + "'");
    }
  }
  return base;
}

ToolkitConfig load_toolkit_config(const std::filesystem::path& path, ToolkitConfig base) {
  return toolkit_config_from_json(read_text_file(path), path.string(), std::move(base));
}

}  // namespace safenav::pipeline
