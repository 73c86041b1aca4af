#include "safenav/reluverify/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "safenav/common/rng.hpp"
#include "safenav/netcore/policy_head.hpp"
#include "safenav/reluverify/verifier.hpp"

namespace safenav::verify {

namespace {

int action_at(const net::Mlp& net, const Eigen::VectorXd& x) {
  return net::greedy_action(net.forward(x));
}

// Looks for a point of `box` where the forbidden action is not selected.
std::optional<Eigen::VectorXd> find_safe_point(const net::Mlp& net, const Box& box, int forbidden,
                                               Rng& rng) {
  const Eigen::VectorXd mid = box.midpoint();
  if (!violates(net, mid, forbidden)) return mid;
  Eigen::VectorXd x(box.dimension());
  for (int s = 0; s < 512; ++s) {
    for (int i = 0; i < box.dimension(); ++i)
      x[i] = s < 64 ? (rng.below(2) == 1 ? box.upper[i] : box.lower[i]) : rng.uniform(box.lower[i], box.upper[i]);
    if (!violates(net, x, forbidden)) return x;
  }
  // Gradient descent on the violation margin.
  const Eigen::VectorXd width = box.upper - box.lower;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(net.output_width());
  constexpr int kRestarts = 8, kSteps = 60;
  for (int r = 0; r < kRestarts; ++r) {
    x = mid;
    if (r > 0)
      for (int i = 0; i < box.dimension(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    for (int t = 0; t < kSteps; ++t) {
      const Eigen::VectorXd z = net.forward(x);
      if (net::greedy_action(z) != forbidden) return x;
      int rival = -1;
      for (int j = 0; j < z.size(); ++j)
        if (j != forbidden && (rival < 0 || z[j] > z[rival])) rival = j;
      w.setZero();
      w[forbidden] = -1.0;
      w[rival] = 1.0;
      const Eigen::VectorXd g = net.input_gradient(x, w);
      const double scale = 0.25 * (1.0 - static_cast<double>(t) / kSteps) + 0.01;
      for (int i = 0; i < x.size(); ++i) x[i] += scale * width[i] * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
      x = box.clamp(x);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<SensitivityPair> find_sensitivity_pair(const net::Mlp& net, const SafetyProperty& property,
                                                     const Eigen::VectorXd& witness, double max_delta,
                                                     std::uint64_t seed) {
  const int forbidden = property.forbidden_action;
  if (!(max_delta > 0.0) || !violates(net, witness, forbidden)) return std::nullopt;
  Rng rng(derive_seed(seed, 1));
  bool inside = property.box.contains(witness);
  std::optional<Eigen::VectorXd> target;
  if (inside) target = find_safe_point(net, property.box, forbidden, rng);
  if (!target) {
    inside = false;
    target = find_safe_point(net, Box::uniform(witness.size(), 0.0, 1.0), forbidden, rng);
  }
  if (!target) return std::nullopt;

  Eigen::VectorXd current = witness;
  for (int i = 0; i < current.size(); ++i) {
    while (current[i] != (*target)[i]) {
      const double step = std::clamp((*target)[i] - current[i], -max_delta, max_delta);
      Eigen::VectorXd next = current;
      next[i] = std::abs((*target)[i] - current[i]) <= max_delta ? (*target)[i] : current[i] + step;
      if (!violates(net, next, forbidden)) {
        SensitivityPair pair;
        pair.unsafe_input = current;
        pair.safe_input = next;
        pair.cell = i;
        pair.delta = next[i] - current[i];
        pair.unsafe_action = action_at(net, current);
        pair.safe_action = action_at(net, next);
        pair.inside_box = inside && property.box.contains(current) && property.box.contains(next);
        return pair;
      }
      current = std::move(next);
    }
  }
  return std::nullopt;
}

bool replay_sensitivity_pair(const net::Mlp& net, const SafetyProperty& property,
                             const SensitivityPair& pair, double max_delta) {
  const Eigen::VectorXd diff = pair.safe_input - pair.unsafe_input;
  int changed = 0;
  for (int i = 0; i < diff.size(); ++i)
    if (diff[i] != 0.0) ++changed;
  if (changed != 1 || std::abs(diff[pair.cell]) > max_delta + 1e-12) return false;
  const bool in_unit = (pair.unsafe_input.array() >= 0.0).all() && (pair.unsafe_input.array() <= 1.0).all() &&
                       (pair.safe_input.array() >= 0.0).all() && (pair.safe_input.array() <= 1.0).all();
  return in_unit && violates(net, pair.unsafe_input, property.forbidden_action) &&
         !violates(net, pair.safe_input, property.forbidden_action);
}

}  // namespace safenav::verify
