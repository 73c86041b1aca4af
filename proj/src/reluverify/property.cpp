#include "safenav/reluverify/property.hpp"

#include <json.hpp>

#include <stdexcept>

#include "safenav/common/io.hpp"
#include "safenav/netcore/mlp.hpp"

namespace safenav::verify {

using nlohmann::json;

Box Box::uniform(int dimension, double lo, double hi) {
  return {Eigen::VectorXd::Constant(dimension, lo), Eigen::VectorXd::Constant(dimension, hi)};
}

bool Box::contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

bool Box::degenerate() const { return (upper.array() <= lower.array()).all(); }

std::vector<int> Box::active_dimensions() const {
  std::vector<int> dims;
  for (int i = 0; i < dimension(); ++i)
    if (width(i) > 0.0) dims.push_back(i);
  return dims;
}

Eigen::VectorXd Box::clamp(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

int Box::widest_dimension() const {
  int best = 0;
  for (int i = 1; i < dimension(); ++i)
    if (width(i) > width(best)) best = i;
  return best;
}

std::pair<Box, Box> Box::split(int dimension) const {
  const double mid = 0.5 * (lower[dimension] + upper[dimension]);
  Box left = *this, right = *this;
  left.upper[dimension] = mid;
  right.lower[dimension] = mid;
  return {left, right};
}

bool Box::within(const Box& outer) const {
  return (lower.array() >= outer.lower.array()).all() && (upper.array() <= outer.upper.array()).all();
}

void SafetyProperty::validate() const {
  const std::string where = "property '" + name + "': ";
  if (box.dimension() != net::kObservationSize || box.upper.size() != box.lower.size())
    throw std::invalid_argument(where + "box must have " + std::to_string(net::kObservationSize) +
                                " intervals");
  for (int i = 0; i < box.dimension(); ++i) {
    const double lo = box.lower[i], hi = box.upper[i];
    if (!(lo <= hi))
      throw std::invalid_argument(where + "interval " + std::to_string(i) + " is empty");
    if (lo < 0.0 || hi > 1.0)
      throw std::invalid_argument(where + "interval " + std::to_string(i) + " leaves [0, 1]");
  }
  if (forbidden_action < 0 || forbidden_action >= net::kActionCount)
    throw std::invalid_argument(where + "forbidden_action " + std::to_string(forbidden_action) +
                                " is not an action index");
}

SafetyProperty bright_cells_property(const std::string& name, const std::vector<int>& bright_cells,
                                     int forbidden_action) {
  SafetyProperty p;
  p.name = name;
  p.box = Box::uniform(net::kObservationSize, 0.0, kDarkHigh);
  for (int cell : bright_cells) {
    p.box.lower[cell] = kBrightLow;
    p.box.upper[cell] = 1.0;
  }
  p.forbidden_action = forbidden_action;
  p.validate();
  return p;
}

std::vector<SafetyProperty> builtin_properties() {
  return {
      bright_cells_property("theta_up", {0, 1, 2, 3}, 1),
      bright_cells_property("theta_down", {12, 13, 14, 15}, 2),
      bright_cells_property("theta_left", {0, 4, 8, 12}, 4),
      bright_cells_property("theta_right", {3, 7, 11, 15}, 3),
  };
}

std::string properties_to_json(const std::vector<SafetyProperty>& properties) {
  json list = json::array();
  for (const auto& p : properties) {
    json box = json::array();
    for (int i = 0; i < p.box.dimension(); ++i) box.push_back({p.box.lower[i], p.box.upper[i]});
    list.push_back({{"name", p.name}, {"box", box}, {"forbidden_action", p.forbidden_action}});
  }
  return json{{"version", 1}, {"properties", list}}.dump(2) + "\n";
}

std::vector<SafetyProperty> properties_from_json(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  std::vector<SafetyProperty> out;
  try {
    if (doc.value("version", 1) != 1) throw FormatError(source + ": unsupported property file version");
    const auto& list = doc.at("properties");
    if (!list.is_array()) throw FormatError(source + ": 'properties' must be a list");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& item = list[k];
      SafetyProperty p;
      p.name = item.at("name").get<std::string>();
      const auto& box = item.at("box");
      if (!box.is_array() || box.size() != static_cast<std::size_t>(net::kObservationSize))
        throw FormatError(source + ": property " + std::to_string(k) + " box must list " +
                          std::to_string(net::kObservationSize) + " intervals");
      p.box = Box::uniform(net::kObservationSize, 0.0, 0.0);
      for (int i = 0; i < net::kObservationSize; ++i) {
        const auto& pair = box[i];
        if (!pair.is_array() || pair.size() != 2)
          throw FormatError(source + ": property " + std::to_string(k) + " interval " +
                            std::to_string(i) + " must be [lo, hi]");
        p.box.lower[i] = pair[0].get<double>();
        p.box.upper[i] = pair[1].get<double>();
      }
      p.forbidden_action = item.at("forbidden_action").get<int>();
      try {
        p.validate();
      } catch (const std::invalid_argument& e) {
        throw FormatError(source + ": " + e.what());
      }
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
  return out;
}

std::vector<SafetyProperty> load_properties(const std::string& path) {
  return properties_from_json(read_text_file(path), path);
}

}  // namespace safenav::verify
