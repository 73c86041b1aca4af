#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

#include "safenav/netcore/mlp.hpp"
#include "safenav/reluverify/property.hpp"

namespace safenav::verify {

// Two inputs that differ in a single cell by at most `max_delta` and fall on
// opposite sides of the safety property: `unsafe_input` selects the forbidden
// action, `safe_input` does not.
struct SensitivityPair {
  Eigen::VectorXd unsafe_input;
  Eigen::VectorXd safe_input;
  int cell = -1;
  double delta = 0.0;
  int unsafe_action = -1;
  int safe_action = -1;
  // Both inputs lie inside the property box.
  bool inside_box = false;
};

inline constexpr double kSensitivityStep = 0.1;

// Walks from `witness` to a non-violating input one cell at a time in steps
// of at most `max_delta` and returns the pair where the outcome flips. The
// safe endpoint is looked for inside the property box first, then anywhere in
// [0, 1]^16. Returns nothing if `witness` does not violate or no safe input
// is found.
std::optional<SensitivityPair> find_sensitivity_pair(const net::Mlp& net, const SafetyProperty& property,
                                                     const Eigen::VectorXd& witness,
                                                     double max_delta = kSensitivityStep,
                                                     std::uint64_t seed = 0);

// Replays both inputs and checks the single-cell and outcome conditions.
bool replay_sensitivity_pair(const net::Mlp& net, const SafetyProperty& property,
                             const SensitivityPair& pair, double max_delta = kSensitivityStep);

}  // namespace safenav::verify
