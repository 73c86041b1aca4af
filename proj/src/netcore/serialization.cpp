#include "safenav/netcore/serialization.hpp"

#include <json.hpp>

#include "safenav/common/io.hpp"

namespace safenav::net {

using nlohmann::json;

std::string network_to_json(const Mlp& net) {
  json doc;
  doc["version"] = kNetworkFormatVersion;
  json layers = json::array();
  json weights = json::array();
  json biases = json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"in", layer.weight.cols()},
                      {"out", layer.weight.rows()},
                      {"activation", to_string(layer.activation)}});
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
    weights.push_back(std::move(w));
    json b = json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
    biases.push_back(std::move(b));
  }
  doc["layers"] = std::move(layers);
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["metadata"] = {{"seed", net.metadata.seed},
                     {"method", net.metadata.method},
                     {"episodes", net.metadata.episodes}};
  return doc.dump(1) + "\n";
}

namespace {

const json& require(const json& node, const char* key, const std::string& where) {
  if (!node.is_object() || !node.contains(key))
    throw FormatError(where + ": missing field '" + key + "'");
  return node.at(key);
}

std::vector<double> numbers(const json& node, const std::string& where) {
  if (!node.is_array()) throw FormatError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) throw FormatError(where + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

Mlp network_from_json(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": not valid JSON (" + e.what() + ")");
  }
  const auto& version = require(doc, "version", source);
  if (!version.is_number_integer()) throw FormatError(source + ": field 'version' must be an integer");
  if (version.get<int>() != kNetworkFormatVersion)
    throw FormatError(source + ": unsupported network format version " +
                      std::to_string(version.get<int>()) + " (expected " +
                      std::to_string(kNetworkFormatVersion) + ")");
  const auto& layer_specs = require(doc, "layers", source);
  const auto& weights = require(doc, "weights", source);
  const auto& biases = require(doc, "biases", source);
  if (!layer_specs.is_array() || layer_specs.empty())
    throw FormatError(source + ": field 'layers' must be a non-empty array");
  if (!weights.is_array() || weights.size() != layer_specs.size())
    throw FormatError(source + ": field 'weights' must hold one array per layer");
  if (!biases.is_array() || biases.size() != layer_specs.size())
    throw FormatError(source + ": field 'biases' must hold one array per layer");

  std::vector<Layer> layers;
  for (std::size_t k = 0; k < layer_specs.size(); ++k) {
    const std::string where = source + ": layer " + std::to_string(k);
    const auto& spec = layer_specs[k];
    const auto& in = require(spec, "in", where);
    const auto& out = require(spec, "out", where);
    const auto& act = require(spec, "activation", where);
    if (!in.is_number_integer() || in.get<long long>() <= 0)
      throw FormatError(where + ": field 'in' must be a positive integer");
    if (!out.is_number_integer() || out.get<long long>() <= 0)
      throw FormatError(where + ": field 'out' must be a positive integer");
    if (!act.is_string()) throw FormatError(where + ": field 'activation' must be a string");
    const auto rows = out.get<Eigen::Index>();
    const auto cols = in.get<Eigen::Index>();
    Layer layer;
    try {
      layer.activation = activation_from_string(act.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    const auto w = numbers(weights[k], where + " weights");
    if (static_cast<Eigen::Index>(w.size()) != rows * cols)
      throw FormatError(where + ": weights has " + std::to_string(w.size()) +
                        " values, expected " + std::to_string(rows * cols));
    const auto b = numbers(biases[k], where + " biases");
    if (static_cast<Eigen::Index>(b.size()) != rows)
      throw FormatError(where + ": biases has " + std::to_string(b.size()) + " values, expected " +
                        std::to_string(rows));
    layer.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[r * cols + c];
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    layers.push_back(std::move(layer));
  }

  NetworkMetadata meta;
  if (doc.contains("metadata")) {
    const auto& m = doc["metadata"];
    const std::string where = source + ": metadata";
    try {
      if (m.contains("seed")) meta.seed = m["seed"].get<std::uint64_t>();
      if (m.contains("method")) meta.method = m["method"].get<std::string>();
      if (m.contains("episodes")) meta.episodes = m["episodes"].get<std::int64_t>();
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  try {
    return Mlp(std::move(layers), std::move(meta));
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save_network(const Mlp& net, const std::filesystem::path& path) {
  write_file_atomic(path, network_to_json(net));
}

Mlp load_network(const std::filesystem::path& path) {
  return network_from_json(read_text_file(path), path.string());
}

PolicyNetwork load_policy(const std::filesystem::path& path) {
  try {
    return PolicyNetwork(load_network(path));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace safenav::net
