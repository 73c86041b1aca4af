#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace safenav::verify {

// Axis-aligned hyper-rectangle of network inputs, closed on both ends.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box uniform(int dimension, double lo, double hi);

  int dimension() const { return static_cast<int>(lower.size()); }
  double width(int i) const { return upper[i] - lower[i]; }
  Eigen::VectorXd midpoint() const { return 0.5 * (lower + upper); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  bool degenerate() const;
  std::vector<int> active_dimensions() const;
  Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Lowest index among the widest intervals.
  int widest_dimension() const;
  std::pair<Box, Box> split(int dimension) const;
  bool within(const Box& outer) const;
};

struct SafetyProperty {
  std::string name;
  Box box;
  int forbidden_action = 0;

  // Throws std::invalid_argument on an empty interval, an interval outside
  // [0, 1], a wrong dimension or an invalid action.
  void validate() const;
};

inline constexpr double kBrightLow = 0.8;
inline constexpr double kDarkHigh = 0.6;

// theta_up, theta_down, theta_left, theta_right.
std::vector<SafetyProperty> builtin_properties();

// Bright cells in [0.8, 1], all other cells in [0, 0.6].
SafetyProperty bright_cells_property(const std::string& name, const std::vector<int>& bright_cells,
                                     int forbidden_action);

std::string properties_to_json(const std::vector<SafetyProperty>& properties);
std::vector<SafetyProperty> properties_from_json(const std::string& text, const std::string& source);
std::vector<SafetyProperty> load_properties(const std::string& path);

}  // namespace safenav::verify
