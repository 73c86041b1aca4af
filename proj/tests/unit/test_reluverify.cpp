#include <doctest.h>
#include <json.hpp>

#include <cmath>

#include "safenav/common/io.hpp"
#include "safenav/netcore/mlp.hpp"
#include "safenav/netcore/policy_head.hpp"
#include "safenav/netcore/serialization.hpp"
#include "safenav/reluverify/bounds.hpp"
#include "safenav/reluverify/property.hpp"
#include "safenav/reluverify/sensitivity.hpp"
#include "safenav/reluverify/verifier.hpp"
#include "test_support.hpp"

using namespace safenav;
using namespace safenav::verify;
using net::Activation;
using net::Mlp;

namespace {

Box random_box(Rng& rng, double max_width) {
  Box b = Box::uniform(16, 0, 0);
  for (int i = 0; i < 16; ++i) {
    const double w = rng.uniform(0, max_width);
    b.lower[i] = rng.uniform(0, 1 - w);
    b.upper[i] = b.lower[i] + w;
  }
  return b;
}

Eigen::VectorXd sample_in(const Box& b, Rng& rng) {
  Eigen::VectorXd x(b.dimension());
  for (int i = 0; i < b.dimension(); ++i) x[i] = rng.uniform(b.lower[i], b.upper[i]);
  return x;
}

// Property with two free cells; the rest are pinned to random values.
SafetyProperty two_dim_property(Rng& rng, int forbidden) {
  SafetyProperty p;
  p.name = "two_dim";
  p.forbidden_action = forbidden;
  p.box = Box::uniform(16, 0, 0);
  for (int i = 0; i < 16; ++i) p.box.lower[i] = p.box.upper[i] = rng.uniform();
  const int a = static_cast<int>(rng.below(16));
  int b = static_cast<int>(rng.below(15));
  if (b >= a) ++b;
  for (int d : {a, b}) {
    p.box.lower[d] = rng.uniform(0, 0.5);
    p.box.upper[d] = p.box.lower[d] + rng.uniform(0.1, 0.5);
  }
  return p;
}

Mlp constant_net(const std::array<double, 5>& logits) {
  Mlp m = Mlp::zeros(Mlp::chain(16, {8}, 5));
  for (int i = 0; i < 5; ++i) m.mutable_layers().back().bias[i] = logits[i];
  return m;
}

VerifierConfig quick_config() {
  VerifierConfig c;
  c.max_subproblems = 50000;
  return c;
}

}  // namespace

TEST_CASE("builtin properties follow the bright-row pattern") {
  const auto props = builtin_properties();
  REQUIRE(props.size() == 4);
  const auto& up = props[0];
  CHECK(up.name == "theta_up");
  CHECK(up.forbidden_action == 1);
  CHECK(up.box.lower[0] == 0.8);
  CHECK(up.box.upper[0] == 1.0);
  CHECK(up.box.lower[5] == 0.0);
  CHECK(up.box.upper[5] == 0.6);
  CHECK(props[1].name == "theta_down");
  CHECK(props[1].forbidden_action == 2);
  CHECK(props[2].name == "theta_left");
  CHECK(props[2].forbidden_action == 4);
  CHECK(props[3].name == "theta_right");
  CHECK(props[3].forbidden_action == 3);

  const std::vector<std::vector<int>> bright = {{0, 1, 2, 3}, {12, 13, 14, 15}, {0, 4, 8, 12}, {3, 7, 11, 15}};
  for (std::size_t k = 0; k < 4; ++k)
    for (int i = 0; i < 16; ++i) {
      const bool is_bright = std::find(bright[k].begin(), bright[k].end(), i) != bright[k].end();
      CHECK(props[k].box.lower[i] == (is_bright ? 0.8 : 0.0));
      CHECK(props[k].box.upper[i] == (is_bright ? 1.0 : 0.6));
    }
}

TEST_CASE("property files") {
  const auto file = load_properties(testing::data_path("properties/builtin.json").string());
  const auto builtin = builtin_properties();
  REQUIRE(file.size() == builtin.size());
  for (std::size_t i = 0; i < file.size(); ++i) {
    CHECK(file[i].name == builtin[i].name);
    CHECK(file[i].forbidden_action == builtin[i].forbidden_action);
    CHECK(file[i].box.lower == builtin[i].box.lower);
    CHECK(file[i].box.upper == builtin[i].box.upper);
  }
  CHECK(properties_to_json(properties_from_json(properties_to_json(builtin), "rt")) == properties_to_json(builtin));

  auto doc = nlohmann::json::parse(properties_to_json(builtin));
  doc["properties"][2]["box"][4] = {0.7, 0.2};
  CHECK_THROWS_WITH_AS(properties_from_json(doc.dump(), "p.json"), doctest::Contains("theta_left"), FormatError);
  doc = nlohmann::json::parse(properties_to_json(builtin));
  doc["properties"][0]["forbidden_action"] = 5;
  CHECK_THROWS_AS(properties_from_json(doc.dump(), "p.json"), FormatError);
  CHECK_THROWS_WITH_AS(load_properties("/missing/props.json"), doctest::Contains("/missing/props.json"), FormatError);
}

TEST_CASE("box helpers") {
  Box b = Box::uniform(4, 0.2, 0.2);
  CHECK(b.degenerate());
  CHECK(b.active_dimensions().empty());
  b.upper[1] = 0.6;
  b.upper[3] = 0.6;
  CHECK(b.active_dimensions() == std::vector<int>{1, 3});
  CHECK(b.widest_dimension() == 1);
  const auto [lo, hi] = b.split(1);
  CHECK(lo.upper[1] == doctest::Approx(0.4));
  CHECK(hi.lower[1] == doctest::Approx(0.4));
  CHECK(lo.within(b));
  CHECK(hi.within(b));
  CHECK_FALSE(b.within(lo));
  Eigen::VectorXd x(4);
  x << 0, 1, 0.2, 0.3;
  CHECK(b.clamp(x) == Eigen::Vector4d(0.2, 0.6, 0.2, 0.3));
  CHECK(b.contains(b.clamp(x)));
  CHECK_FALSE(b.contains(x));
}

TEST_CASE("bounds of an affine network are its exact interval image") {
  Rng rng(1);
  Mlp m = Mlp::glorot({{16, 5, Activation::kIdentity}}, 3);
  m.mutable_layers()[0].bias = testing::random_vector(rng, 5, -1, 1);
  const Box box = random_box(rng, 0.5);
  const auto state = propagate_bounds(m, box);
  const auto& w = m.layers()[0].weight;
  for (int r = 0; r < 5; ++r) {
    double lo = m.layers()[0].bias[r], hi = lo;
    for (int c = 0; c < 16; ++c) {
      lo += std::min(w(r, c) * box.lower[c], w(r, c) * box.upper[c]);
      hi += std::max(w(r, c) * box.lower[c], w(r, c) * box.upper[c]);
    }
    CHECK(state.output_lower()[r] == doctest::Approx(lo).epsilon(1e-12));
    CHECK(state.output_upper()[r] == doctest::Approx(hi).epsilon(1e-12));
  }
}

TEST_CASE("propagated bounds contain every sampled activation") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Mlp m = Mlp::glorot(Mlp::chain(16, {8}, 5), 100 + trial);
    const Box box = random_box(rng, trial < 5 ? 0.3 : 1.0);
    const auto state = propagate_bounds(m, box);
    const auto margins = margin_lower_bounds(m, state, trial % 5);
    for (const auto& layer : state.layers) CHECK((layer.lb.array() <= layer.ub.array()).all());
    for (int s = 0; s < 1000; ++s) {
      const Eigen::VectorXd x = sample_in(box, rng);
      net::ForwardCache cache;
      m.forward_batch(x, cache);
      for (std::size_t k = 0; k < state.layers.size(); ++k) {
        const auto& L = state.layers[k];
        const Eigen::VectorXd z = cache.preactivations[k].col(0);
        CHECK((z.array() >= L.lb.array() - 1e-12).all());
        CHECK((z.array() <= L.ub.array() + 1e-12).all());
        CHECK(((L.lower_coeff * x + L.lower_const).array() <= z.array() + 1e-12).all());
        CHECK(((L.upper_coeff * x + L.upper_const).array() >= z.array() - 1e-12).all());
      }
      const Eigen::VectorXd z = m.forward(x);
      for (int j = 0; j < 5; ++j)
        if (j != trial % 5) CHECK(z[j] - z[trial % 5] >= margins.value[j] - 1e-12);
    }
  }
}

TEST_CASE("a point box collapses the bounds onto the forward pass") {
  Rng rng(3);
  const Mlp m = Mlp::glorot(Mlp::chain(16, {32, 32}, 5), 4);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = testing::random_vector(rng, 16);
    const auto state = propagate_bounds(m, Box{x, x});
    const Eigen::VectorXd z = m.forward(x);
    CHECK((state.output_lower() - z).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((state.output_upper() - z).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("bounds are exact when every ReLU is stable") {
  Rng rng(4);
  const Mlp m = Mlp::glorot(Mlp::chain(16, {8}, 5), 6);
  int checked = 0;
  for (int trial = 0; trial < 50 && checked < 10; ++trial) {
    const Eigen::VectorXd c = testing::random_vector(rng, 16, 0.1, 0.9);
    const Box box{c.array() - 1e-3, c.array() + 1e-3};
    const auto state = propagate_bounds(m, box);
    if (state.unstable_count() != 0) continue;
    ++checked;
    // Effective affine map from the activation pattern at the centre.
    const auto& l0 = m.layers()[0];
    const auto& l1 = m.layers()[1];
    const Eigen::VectorXd pre = l0.weight * c + l0.bias;
    Eigen::MatrixXd w = l0.weight;
    Eigen::VectorXd b = l0.bias;
    for (int i = 0; i < pre.size(); ++i)
      if (pre[i] <= 0) {
        w.row(i).setZero();
        b[i] = 0;
      }
    const Eigen::MatrixXd weff = l1.weight * w;
    const Eigen::VectorXd beff = l1.weight * b + l1.bias;
    for (int r = 0; r < 5; ++r) {
      double lo = beff[r], hi = beff[r];
      for (int j = 0; j < 16; ++j) {
        lo += std::min(weff(r, j) * box.lower[j], weff(r, j) * box.upper[j]);
        hi += std::max(weff(r, j) * box.lower[j], weff(r, j) * box.upper[j]);
      }
      CHECK(state.output_lower()[r] == doctest::Approx(lo).epsilon(1e-9));
      CHECK(state.output_upper()[r] == doctest::Approx(hi).epsilon(1e-9));
    }
  }
  CHECK(checked >= 5);
}

TEST_CASE("counterexample search examples") {
  const VerifierConfig config = quick_config();
  SUBCASE("forbidden logit held below the others") {
    const Mlp m = constant_net({0.0, -1.0, 0.0, 0.5, 0.0});
    CHECK_FALSE(search_counterexample(m, builtin_properties()[0], config).has_value());
  }
  SUBCASE("forbidden logit follows one input") {
    Mlp m = Mlp::zeros({{16, 5, Activation::kIdentity}});
    auto& L = m.mutable_layers()[0];
    L.weight(2, 0) = 1.0;
    for (int j : {0, 1, 3, 4}) L.bias[j] = 0.5;
    SafetyProperty p = builtin_properties()[0];
    p.forbidden_action = 2;
    const auto w = search_counterexample(m, p, config);
    REQUIRE(w.has_value());
    CHECK(p.box.contains(*w));
    CHECK((*w)[0] > 0.5);
    CHECK(violation_margin(m.forward(*w), 2) > 0);
    CHECK(violates(m, *w, 2));
  }
}

TEST_CASE("constant networks decide immediately") {
  const VerifierConfig config = quick_config();
  const auto up = builtin_properties()[0];
  SUBCASE("strictly dominated forbidden action") {
    const auto r = check_property(net::load_network(testing::data_path("nets/constant_safe.json")), up, config);
    CHECK(r.verdict == Verdict::kUnsat);
    CHECK_FALSE(r.witness.has_value());
  }
  SUBCASE("an exact tie can be neither pruned nor violated") {
    const auto r = check_property(Mlp::zeros(Mlp::chain(16, {8}, 5)), up, config);
    CHECK(r.verdict == Verdict::kUnknown);
    CHECK_FALSE(r.witness.has_value());
  }
  SUBCASE("bias favouring the forbidden action") {
    const auto m = net::load_network(testing::data_path("nets/constant_violation.json"));
    const auto r = check_property(m, up, config);
    REQUIRE(r.verdict == Verdict::kSat);
    REQUIRE(r.witness.has_value());
    CHECK(up.box.contains(*r.witness));
    CHECK(violates(m, *r.witness, up.forbidden_action));
  }
  SUBCASE("tie with a lower index is not a violation") {
    const auto r = check_property(constant_net({1.0, 1.0, 0.0, 0.0, 0.0}), up, config);
    CHECK(r.verdict != Verdict::kSat);
    CHECK(r.verdict == check_property(constant_net({1.0, 1.0, 0.5, 0.0, 0.0}), up, config).verdict);
  }
  SUBCASE("tie with a higher index is a violation") {
    const auto r = check_property(constant_net({0.0, 1.0, 0.0, 0.0, 1.0}), up, config);
    CHECK(r.verdict == Verdict::kSat);
  }
}

TEST_CASE("verdicts agree with the grid oracle on two-dimensional properties") {
  Rng rng(5);
  int decided = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const Mlp m = Mlp::glorot(Mlp::chain(16, {8}, 5), 500 + trial);
    const SafetyProperty p = two_dim_property(rng, static_cast<int>(rng.below(5)));
    for (auto heuristic : {SplitHeuristic::kWidestInput, SplitHeuristic::kSmallestMargin}) {
      VerifierConfig config = quick_config();
      config.split_heuristic = heuristic;
      const auto r = check_property(m, p, config);
      CHECK(r.verdict != Verdict::kUnknown);
      if (r.verdict == Verdict::kSat) {
        REQUIRE(r.witness.has_value());
        CHECK(p.box.contains(*r.witness));
        CHECK(violates(m, *r.witness, p.forbidden_action));
      }
      const auto g = grid_certify(m, p, 0.005);
      if (g.verdict == GridVerdict::kSat) {
        CHECK(r.verdict == Verdict::kSat);
        ++decided;
      } else if (g.verdict == GridVerdict::kUnsatCertified) {
        CHECK(r.verdict == Verdict::kUnsat);
        ++decided;
      }
    }
  }
  CHECK(decided >= 12);
}

TEST_CASE("grid oracle examples") {
  const auto prop = [] {
    SafetyProperty p = builtin_properties()[0];
    for (int i = 2; i < 16; ++i) p.box.upper[i] = p.box.lower[i];
    return p;
  }();
  SUBCASE("constant violation is found at the first grid point") {
    const auto g = grid_certify(net::load_network(testing::data_path("nets/constant_violation.json")), prop, 0.01);
    CHECK(g.verdict == GridVerdict::kSat);
    CHECK(g.points == 1);
    REQUIRE(g.witness.has_value());
    CHECK(*g.witness == prop.box.lower);
  }
  SUBCASE("constant safe margin with a negligible Lipschitz slack is certified") {
    Mlp m = constant_net({1.0, 0.0, 0.0, 0.0, 0.0});
    m.mutable_layers()[0].weight.setConstant(1e-6);
    m.mutable_layers()[1].weight.setConstant(1e-6);
    const auto g = grid_certify(m, prop, 0.05);
    CHECK(g.verdict == GridVerdict::kUnsatCertified);
    CHECK(g.max_margin == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(g.threshold > -1e-9);
  }
  SUBCASE("grid limits") {
    const Mlp m = constant_net({1, 0, 0, 0, 0});
    CHECK_THROWS_WITH_AS(grid_certify(m, builtin_properties()[0], 0.01), doctest::Contains("active dimensions"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(grid_certify(m, prop, 1e-5, 1000), doctest::Contains("exceeds"), std::invalid_argument);
  }
}

TEST_CASE("lipschitz bound dominates observed slopes") {
  Rng rng(6);
  const Mlp m = Mlp::glorot(Mlp::chain(16, {8}, 5), 77);
  const std::vector<int> dims = {3, 9};
  const double L = lipschitz_upper_bound(m, dims);
  for (int s = 0; s < 2000; ++s) {
    Eigen::VectorXd x = testing::random_vector(rng, 16), y = x;
    for (int d : dims) y[d] = rng.uniform();
    const double dx = (x - y).norm();
    if (dx < 1e-9) continue;
    CHECK((m.forward(x) - m.forward(y)).norm() <= L * dx * (1 + 1e-12));
  }
  CHECK(lipschitz_upper_bound(m, {3}) <= L);
}

TEST_CASE("UNSAT is monotone under box inclusion") {
  Rng rng(7);
  int nested = 0;
  for (int trial = 0; trial < 40 && nested < 8; ++trial) {
    const Mlp m = Mlp::glorot(Mlp::chain(16, {8}, 5), 900 + trial);
    const SafetyProperty outer = two_dim_property(rng, static_cast<int>(rng.below(5)));
    if (check_property(m, outer, quick_config()).verdict != Verdict::kUnsat) continue;
    ++nested;
    SafetyProperty inner = outer;
    for (int d : outer.box.active_dimensions()) {
      const double a = rng.uniform(outer.box.lower[d], outer.box.upper[d]);
      const double b = rng.uniform(outer.box.lower[d], outer.box.upper[d]);
      inner.box.lower[d] = std::min(a, b);
      inner.box.upper[d] = std::max(a, b);
    }
    CHECK(inner.box.within(outer.box));
    CHECK(check_property(m, inner, quick_config()).verdict == Verdict::kUnsat);
  }
  CHECK(nested >= 3);
}

TEST_CASE("resource limits produce UNKNOWN, never a wrong verdict") {
  // theta_right on the canonical fixture holds only with a zero margin, so
  // no sub-box can be pruned and no witness exists.
  const auto m = net::load_network(testing::data_path("nets/canonical_16-2-5.json"));
  VerifierConfig config = quick_config();
  config.max_depth = 4;
  const auto r = check_property(m, builtin_properties()[3], config);
  CHECK(r.verdict == Verdict::kUnknown);
  CHECK(r.stats.max_depth <= 4);
  CHECK(r.stats.subproblems > 1);

  config.max_depth = 30;
  config.max_subproblems = 100;
  const auto capped = check_property(m, builtin_properties()[3], config);
  CHECK(capped.verdict == Verdict::kUnknown);
  CHECK(capped.stats.subproblems <= 100);
}

TEST_CASE("verify_all classification") {
  const VerifierConfig config = quick_config();
  const auto props = builtin_properties();
  const auto safe = verify_all(net::load_network(testing::data_path("nets/constant_safe.json")), props, config);
  CHECK(safe.safe);
  CHECK_FALSE(safe.unresolved);
  CHECK(safe.sat_count() == 0);

  const auto unsafe = verify_all(net::load_network(testing::data_path("nets/constant_violation.json")), props, config);
  CHECK_FALSE(unsafe.safe);
  CHECK(unsafe.sat_count() == 1);
  CHECK(unsafe.results[0].verdict == Verdict::kSat);

  VerifierConfig shallow = config;
  shallow.max_depth = 2;
  std::vector<SafetyProperty> one = {props[3]};
  const auto unknown = verify_all(net::load_network(testing::data_path("nets/canonical_16-2-5.json")), one, shallow);
  CHECK_FALSE(unknown.safe);
  CHECK(unknown.unresolved);
}

TEST_CASE("verification result files round trip") {
  const auto props = builtin_properties();
  const auto v = verify_all(net::load_network(testing::data_path("nets/constant_violation.json")), props, quick_config());
  const auto back = verification_from_json(verification_to_json(v), "v.json");
  REQUIRE(back.results.size() == 4);
  CHECK(back.safe == v.safe);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.results[i].property == v.results[i].property);
    CHECK(back.results[i].verdict == v.results[i].verdict);
    CHECK(back.results[i].witness.has_value() == v.results[i].witness.has_value());
    if (v.results[i].witness) CHECK(*back.results[i].witness == *v.results[i].witness);
  }
  CHECK_THROWS_AS(verification_from_json("{\"version\":1}", "v.json"), FormatError);
}

TEST_CASE("sensitivity pair around a threshold cell") {
  // Action 1 wins once cell 5 exceeds 0.25.
  Mlp m = Mlp::zeros({{16, 5, Activation::kIdentity}});
  m.mutable_layers()[0].weight(1, 5) = 2.0;
  m.mutable_layers()[0].bias[0] = 0.5;
  const auto up = builtin_properties()[0];
  const auto r = check_property(m, up, quick_config());
  REQUIRE(r.verdict == Verdict::kSat);
  const auto pair = find_sensitivity_pair(m, up, *r.witness);
  REQUIRE(pair.has_value());
  CHECK(pair->cell == 5);
  CHECK(std::abs(pair->delta) <= kSensitivityStep + 1e-12);
  CHECK(pair->inside_box);
  CHECK(pair->unsafe_action == 1);
  CHECK(pair->safe_action == 0);
  CHECK(replay_sensitivity_pair(m, up, *pair));
  CHECK(violates(m, pair->unsafe_input, 1));
  CHECK_FALSE(violates(m, pair->safe_input, 1));
  CHECK((pair->unsafe_input - pair->safe_input).cwiseAbs().maxCoeff() <= kSensitivityStep + 1e-12);

  SensitivityPair forged = *pair;
  forged.safe_input[7] += 0.05;
  CHECK_FALSE(replay_sensitivity_pair(m, up, forged));

  const auto everywhere = net::load_network(testing::data_path("nets/constant_violation.json"));
  CHECK_FALSE(find_sensitivity_pair(everywhere, up, up.box.midpoint()).has_value());
  CHECK_FALSE(find_sensitivity_pair(m, up, Eigen::VectorXd::Zero(16)).has_value());
}

TEST_CASE("sat witnesses of trained-like networks replay") {
  Rng rng(8);
  const VerifierConfig config = quick_config();
  int sat = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Mlp m = Mlp::glorot(Mlp::chain(16, {32, 32}, 5), 40 + trial);
    for (const auto& p : builtin_properties()) {
      const auto r = check_property(m, p, config);
      if (r.verdict != Verdict::kSat) continue;
      ++sat;
      CHECK(p.box.contains(*r.witness));
      CHECK(violates(m, *r.witness, p.forbidden_action));
      const auto pair = find_sensitivity_pair(m, p, *r.witness);
      if (pair) CHECK(replay_sensitivity_pair(m, p, *pair));
    }
  }
  CHECK(sat > 0);
}

TEST_CASE("verifier config validation and names") {
  VerifierConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_depth = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("max_depth"), std::invalid_argument);
  CHECK(to_string(Verdict::kSat) == "SAT");
  CHECK(verdict_from_string("UNKNOWN") == Verdict::kUnknown);
  CHECK(split_heuristic_from_string("smallest_margin") == SplitHeuristic::kSmallestMargin);
  CHECK(to_string(GridVerdict::kUnsatCertified) == "UNSAT_certified");
  CHECK_THROWS_AS(split_heuristic_from_string("random"), std::invalid_argument);
}
