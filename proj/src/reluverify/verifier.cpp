#include "safenav/reluverify/verifier.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "safenav/common/io.hpp"
#include "safenav/common/rng.hpp"
#include "safenav/netcore/policy_head.hpp"
#include "safenav/reluverify/bounds.hpp"

namespace safenav::verify {

using nlohmann::json;

namespace {

struct AttackBudget {
  int corners = 0;
  int restarts = 0;
  int steps = 0;
};

Eigen::VectorXd random_point(const Box& box, Rng& rng) {
  Eigen::VectorXd x(box.dimension());
  for (int i = 0; i < box.dimension(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
  return x;
}

std::optional<Eigen::VectorXd> attack(const net::Mlp& net, const Box& box, int forbidden,
                                      const AttackBudget& budget, Rng& rng) {
  const Eigen::VectorXd mid = box.midpoint();
  if (violates(net, mid, forbidden)) return mid;

  const std::vector<int> dims = box.active_dimensions();
  const int k = static_cast<int>(dims.size());
  if (budget.corners > 0 && k > 0) {
    const bool exhaustive = k < 31 && (std::int64_t{1} << k) <= budget.corners;
    const std::int64_t count = exhaustive ? (std::int64_t{1} << k) : budget.corners;
    Eigen::VectorXd x = box.lower;
    for (std::int64_t c = 0; c < count; ++c) {
      for (int d = 0; d < k; ++d) {
        const bool high = exhaustive ? ((c >> d) & 1) != 0 : rng.below(2) == 1;
        x[dims[d]] = high ? box.upper[dims[d]] : box.lower[dims[d]];
      }
      if (violates(net, x, forbidden)) return x;
    }
  }

  const Eigen::VectorXd width = box.upper - box.lower;
  const double diameter = width.norm();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(net.output_width());
  for (int r = 0; r < budget.restarts; ++r) {
    Eigen::VectorXd x = r == 0 ? mid : random_point(box, rng);
    for (int t = 0; t <= budget.steps; ++t) {
      const Eigen::VectorXd z = net.forward(x);
      if (net::greedy_action(z) == forbidden) return x;
      if (t == budget.steps) break;
      int rival = -1;
      for (int j = 0; j < z.size(); ++j)
        if (j != forbidden && (rival < 0 || z[j] > z[rival])) rival = j;
      w.setZero();
      w[forbidden] = 1.0;
      w[rival] = -1.0;
      // Normalized ascent step, shrinking geometrically from a quarter of the
      // box diameter to a hundredth of that.
      const Eigen::VectorXd g = width.cwiseProduct(net.input_gradient(x, w));
      const double norm = g.norm();
      if (norm == 0.0) break;
      const double frac = static_cast<double>(t) / budget.steps;
      x += (0.25 * diameter * std::pow(0.01, frac) / norm) * g;
      x = box.clamp(x);
    }
  }
  return std::nullopt;
}

// Best lower bound over the rival actions; positive means the box is safe.
double best_margin(const net::Mlp& net, const Box& box, int forbidden) {
  const BoundsState state = propagate_bounds(net, box);
  return margin_lower_bounds(net, state, forbidden).value.maxCoeff();
}

int choose_split(const net::Mlp& net, const Box& box, int forbidden, SplitHeuristic heuristic) {
  if (heuristic == SplitHeuristic::kSmallestMargin) {
    // Try every split and keep the one whose weaker half is closest to being
    // proved safe.
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i : box.active_dimensions()) {
      const auto [low, high] = box.split(i);
      const double score = std::min(best_margin(net, low, forbidden), best_margin(net, high, forbidden));
      if (score > best_score) {
        best = i;
        best_score = score;
      }
    }
    if (best >= 0) return best;
  }
  return box.widest_dimension();
}

}  // namespace

void VerifierConfig::validate() const {
  if (max_depth < 1) throw std::invalid_argument("verifier config: max_depth must be at least 1");
  if (attack_restarts < 0 || attack_steps < 0)
    throw std::invalid_argument("verifier config: attack budgets must be non-negative");
  if (!(stability_tolerance >= 0.0))
    throw std::invalid_argument("verifier config: stability_tolerance must be non-negative");
  if (max_subproblems < 1) throw std::invalid_argument("verifier config: max_subproblems must be positive");
}

bool violates(const net::Mlp& net, const Eigen::Ref<const Eigen::VectorXd>& x, int forbidden) {
  return net::greedy_action(net.forward(x)) == forbidden;
}

double violation_margin(const Eigen::Ref<const Eigen::VectorXd>& logits, int forbidden) {
  double rival = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < logits.size(); ++j)
    if (j != forbidden) rival = std::max(rival, logits[j]);
  return logits[forbidden] - rival;
}

std::optional<Eigen::VectorXd> search_counterexample(const net::Mlp& net,
                                                     const SafetyProperty& property,
                                                     const VerifierConfig& config) {
  Rng rng(derive_seed(config.seed, 0));
  auto x = attack(net, property.box, property.forbidden_action,
                  {config.attack_restarts, config.attack_restarts, config.attack_steps}, rng);
  if (x && !(property.box.contains(*x) && violates(net, *x, property.forbidden_action)))
    throw std::logic_error("counterexample search produced an invalid witness");
  return x;
}

VerificationResult check_property(const net::Mlp& net, const SafetyProperty& property,
                                  const VerifierConfig& config) {
  config.validate();
  property.validate();
  const auto started = std::chrono::steady_clock::now();
  VerificationResult result;
  result.property = property.name;
  const int forbidden = property.forbidden_action;

  Rng rng(derive_seed(config.seed, 0));
  const AttackBudget root_budget{config.attack_restarts, config.attack_restarts, config.attack_steps};
  const AttackBudget node_budget{0, 1, std::max(1, config.attack_steps / 5)};

  std::vector<std::pair<Box, int>> stack;
  stack.emplace_back(property.box, 0);
  bool unresolved = false;
  while (!stack.empty()) {
    if (result.stats.subproblems >= config.max_subproblems) {
      unresolved = true;
      break;
    }
    auto [box, depth] = std::move(stack.back());
    stack.pop_back();
    ++result.stats.subproblems;
    result.stats.max_depth = std::max(result.stats.max_depth, depth);

    if (box.degenerate()) {
      if (violates(net, box.lower, forbidden)) {
        result.verdict = Verdict::kSat;
        result.witness = box.lower;
        break;
      }
      continue;
    }
    const BoundsState state = propagate_bounds(net, box);
    const AffineForm margins = margin_lower_bounds(net, state, forbidden);
    if (margins.value.maxCoeff() > config.stability_tolerance) continue;

    if (auto x = attack(net, box, forbidden, depth == 0 ? root_budget : node_budget, rng)) {
      result.verdict = Verdict::kSat;
      result.witness = std::move(x);
      break;
    }
    if (depth >= config.max_depth) {
      unresolved = true;
      continue;
    }
    auto [low, high] = box.split(choose_split(net, box, forbidden, config.split_heuristic));
    stack.emplace_back(std::move(high), depth + 1);
    stack.emplace_back(std::move(low), depth + 1);
  }
  if (result.verdict != Verdict::kSat) result.verdict = unresolved ? Verdict::kUnknown : Verdict::kUnsat;

  if (result.verdict == Verdict::kSat &&
      !(property.box.contains(*result.witness) && violates(net, *result.witness, forbidden)))
    throw std::logic_error("verifier produced a witness that does not replay");
  result.stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

double lipschitz_upper_bound(const net::Mlp& net, const std::vector<int>& dims) {
  double product = 1.0;
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Eigen::MatrixXd w;
    if (k == 0) {
      w.resize(layers[0].weight.rows(), static_cast<Eigen::Index>(dims.size()));
      for (std::size_t c = 0; c < dims.size(); ++c) w.col(c) = layers[0].weight.col(dims[c]);
    } else {
      w = layers[k].weight;
    }
    if (w.size() == 0) return 0.0;
    const double frobenius = w.norm();
    const double one = w.cwiseAbs().colwise().sum().maxCoeff();
    const double inf = w.cwiseAbs().rowwise().sum().maxCoeff();
    product *= std::min(frobenius, std::sqrt(one * inf));
  }
  return product;
}

GridResult grid_certify(const net::Mlp& net, const SafetyProperty& property, double epsilon,
                        std::int64_t max_points) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grid certify: epsilon must be positive");
  property.validate();
  const Box& box = property.box;
  const std::vector<int> dims = box.active_dimensions();
  const int k = static_cast<int>(dims.size());
  if (k > 3)
    throw std::invalid_argument("grid certify: property '" + property.name + "' has " +
                                std::to_string(k) + " active dimensions, at most 3 are supported");
  std::vector<std::int64_t> counts(k);
  double total = 1.0;
  for (int d = 0; d < k; ++d) {
    counts[d] = static_cast<std::int64_t>(std::ceil(box.width(dims[d]) / epsilon)) + 1;
    total *= static_cast<double>(counts[d]);
  }
  if (total > static_cast<double>(max_points))
    throw std::invalid_argument("grid certify: grid of " + std::to_string(static_cast<std::int64_t>(total)) +
                                " points exceeds the cap of " + std::to_string(max_points));

  GridResult result;
  result.lipschitz = lipschitz_upper_bound(net, dims);
  result.threshold = -result.lipschitz * epsilon * std::sqrt(static_cast<double>(k));
  result.max_margin = -std::numeric_limits<double>::infinity();
  const std::int64_t points = static_cast<std::int64_t>(total);
  constexpr std::int64_t kChunk = 4096;
  std::vector<std::int64_t> index(k, 0);
  for (std::int64_t start = 0; start < points; start += kChunk) {
    const std::int64_t n = std::min(kChunk, points - start);
    Eigen::MatrixXd xs(box.dimension(), n);
    for (std::int64_t c = 0; c < n; ++c) {
      xs.col(c) = box.lower;
      for (int d = 0; d < k; ++d) {
        const int dim = dims[d];
        xs(dim, c) = index[d] + 1 == counts[d]
                         ? box.upper[dim]
                         : box.lower[dim] + box.width(dim) * static_cast<double>(index[d]) /
                                                static_cast<double>(counts[d] - 1);
      }
      for (int d = k - 1; d >= 0; --d) {
        if (++index[d] < counts[d]) break;
        index[d] = 0;
      }
    }
    const Eigen::MatrixXd z = net.forward_batch(xs);
    for (std::int64_t c = 0; c < n; ++c) {
      ++result.points;
      result.max_margin = std::max(result.max_margin, violation_margin(z.col(c), property.forbidden_action));
      if (net::greedy_action(z.col(c)) == property.forbidden_action) {
        result.verdict = GridVerdict::kSat;
        result.witness = xs.col(c);
        return result;
      }
    }
  }
  result.verdict = result.max_margin < result.threshold ? GridVerdict::kUnsatCertified
                                                        : GridVerdict::kInconclusive;
  return result;
}

int PolicyVerification::sat_count() const {
  int n = 0;
  for (const auto& r : results)
    if (r.verdict == Verdict::kSat) ++n;
  return n;
}

PolicyVerification verify_all(const net::Mlp& net, const std::vector<SafetyProperty>& properties,
                              const VerifierConfig& config) {
  PolicyVerification out;
  out.safe = true;
  for (const auto& property : properties) {
    out.results.push_back(check_property(net, property, config));
    const Verdict v = out.results.back().verdict;
    if (v != Verdict::kUnsat) out.safe = false;
    if (v == Verdict::kUnknown) out.unresolved = true;
  }
  return out;
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kSat:
      return "SAT";
    case Verdict::kUnsat:
      return "UNSAT";
    case Verdict::kUnknown:
      return "UNKNOWN";
  }
  return "UNKNOWN";
}

Verdict verdict_from_string(const std::string& name) {
  if (name == "SAT") return Verdict::kSat;
  if (name == "UNSAT") return Verdict::kUnsat;
  if (name == "UNKNOWN") return Verdict::kUnknown;
  throw std::invalid_argument("unknown verdict '" + name + "'");
}

std::string to_string(SplitHeuristic heuristic) {
  return heuristic == SplitHeuristic::kWidestInput ? "widest_input" : "smallest_margin";
}

SplitHeuristic split_heuristic_from_string(const std::string& name) {
  if (name == "widest_input") return SplitHeuristic::kWidestInput;
  if (name == "smallest_margin") return SplitHeuristic::kSmallestMargin;
  throw std::invalid_argument("unknown split heuristic '" + name + "' (expected widest_input or smallest_margin)");
}

std::string to_string(GridVerdict verdict) {
  switch (verdict) {
    case GridVerdict::kSat:
      return "SAT";
    case GridVerdict::kUnsatCertified:
      return "UNSAT_certified";
    case GridVerdict::kInconclusive:
      return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

std::string verification_to_json(const PolicyVerification& verification) {
  json results = json::array();
  for (const auto& r : verification.results) {
    json item = {{"property", r.property},
                 {"verdict", to_string(r.verdict)},
                 {"subproblems", r.stats.subproblems},
                 {"depth", r.stats.max_depth},
                 {"seconds", r.stats.seconds}};
    if (r.witness) {
      item["witness"] = std::vector<double>(r.witness->data(), r.witness->data() + r.witness->size());
    } else {
      item["witness"] = nullptr;
    }
    results.push_back(std::move(item));
  }
  json doc = {{"version", 1},
              {"safe", verification.safe},
              {"unresolved", verification.unresolved},
              {"results", results}};
  return doc.dump(2) + "\n";
}

PolicyVerification verification_from_json(const std::string& text, const std::string& source) {
  PolicyVerification out;
  try {
    const json doc = json::parse(text);
    out.safe = doc.at("safe").get<bool>();
    out.unresolved = doc.at("unresolved").get<bool>();
    for (const auto& item : doc.at("results")) {
      VerificationResult r;
      r.property = item.at("property").get<std::string>();
      r.verdict = verdict_from_string(item.at("verdict").get<std::string>());
      r.stats.subproblems = item.at("subproblems").get<std::int64_t>();
      r.stats.max_depth = item.at("depth").get<int>();
      r.stats.seconds = item.at("seconds").get<double>();
      if (!item.at("witness").is_null()) {
        const auto values = item.at("witness").get<std::vector<double>>();
        r.witness = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
      }
      out.results.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  return out;
}

}  // namespace safenav::verify
