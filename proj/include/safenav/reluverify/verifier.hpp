#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safenav/netcore/mlp.hpp"
#include "safenav/reluverify/property.hpp"

namespace safenav::verify {

enum class Verdict { kSat, kUnsat, kUnknown };
enum class SplitHeuristic { kWidestInput, kSmallestMargin };

struct VerifierConfig {
  int max_depth = 30;
  int attack_restarts = 16;
  int attack_steps = 50;
  SplitHeuristic split_heuristic = SplitHeuristic::kWidestInput;
  double stability_tolerance = 1e-9;
  // Hard cap on explored sub-boxes; reaching it yields UNKNOWN.
  std::int64_t max_subproblems = 200000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VerificationStats {
  std::int64_t subproblems = 0;
  int max_depth = 0;
  double seconds = 0.0;
};

struct VerificationResult {
  std::string property;
  Verdict verdict = Verdict::kUnknown;
  std::optional<Eigen::VectorXd> witness;
  VerificationStats stats;
};

// Greedy (lowest-index) selection at x equals the forbidden action.
bool violates(const net::Mlp& net, const Eigen::Ref<const Eigen::VectorXd>& x, int forbidden);

// z_forbidden - max_{j != forbidden} z_j. Positive means a strict violation.
double violation_margin(const Eigen::Ref<const Eigen::VectorXd>& logits, int forbidden);

// Box corners, then projected gradient ascent on the violation margin. Only
// returns points that violate under concrete evaluation.
std::optional<Eigen::VectorXd> search_counterexample(const net::Mlp& net,
                                                     const SafetyProperty& property,
                                                     const VerifierConfig& config);

VerificationResult check_property(const net::Mlp& net, const SafetyProperty& property,
                                  const VerifierConfig& config);

enum class GridVerdict { kSat, kUnsatCertified, kInconclusive };

struct GridResult {
  GridVerdict verdict = GridVerdict::kInconclusive;
  std::optional<Eigen::VectorXd> witness;
  double max_margin = 0.0;
  double lipschitz = 0.0;
  double threshold = 0.0;
  std::int64_t points = 0;
};

inline constexpr std::int64_t kDefaultGridCap = 5'000'000;

// Upper bound on the l2 Lipschitz constant of the logits with respect to the
// inputs listed in `dims`.
double lipschitz_upper_bound(const net::Mlp& net, const std::vector<int>& dims);

// Brute-force oracle over the epsilon-grid of the property's active
// dimensions (at most three). Throws std::invalid_argument when the property
// has too many active dimensions or the grid exceeds `max_points`.
GridResult grid_certify(const net::Mlp& net, const SafetyProperty& property, double epsilon,
                        std::int64_t max_points = kDefaultGridCap);

struct PolicyVerification {
  std::vector<VerificationResult> results;
  bool safe = false;
  bool unresolved = false;

  int sat_count() const;
};

PolicyVerification verify_all(const net::Mlp& net, const std::vector<SafetyProperty>& properties,
                              const VerifierConfig& config);

std::string to_string(Verdict verdict);
Verdict verdict_from_string(const std::string& name);
std::string to_string(SplitHeuristic heuristic);
SplitHeuristic split_heuristic_from_string(const std::string& name);
std::string to_string(GridVerdict verdict);

// Result file: per property verdict, witness, subproblems, depth, seconds.
std::string verification_to_json(const PolicyVerification& verification);
PolicyVerification verification_from_json(const std::string& text, const std::string& source);

}  // namespace safenav::verify
