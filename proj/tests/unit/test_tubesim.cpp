#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "safenav/common/io.hpp"
#include "safenav/tubesim/simulator.hpp"
#include "safenav/tubesim/tube.hpp"
#include "test_support.hpp"

using namespace safenav;
using namespace safenav::sim;

namespace {

TubeSpec straight_spec(double length, double spacing = 10.0) {
  TubeSpec spec;
  spec.id = "straight";
  for (double z = 0; z <= length + 1e-9; z += spacing) spec.waypoints.emplace_back(0, 0, z);
  return spec;
}

TubeSpec quarter_circle_spec(double bend_radius) {
  TubeSpec spec;
  spec.id = "quarter";
  for (int deg = 0; deg <= 90; ++deg) {
    const double a = deg * M_PI / 180.0;
    spec.waypoints.emplace_back(bend_radius * (1 - std::cos(a)), 0, bend_radius * std::sin(a));
  }
  return spec;
}

// Unit camera ray through a cell centre, computed from the frame directly.
Vec3 oracle_direction(const Frame& f, int row, int col, double fov) {
  const double h = std::tan(fov / 2);
  const double u = -1.0 + (col + 0.5) * 0.5;
  const double v = 1.0 - (row + 0.5) * 0.5;
  Vec3 d = f.forward + h * u * f.right + h * v * f.up;
  return d / d.norm();
}

// Brightness of one ray in a straight tube along +z from 0 to `length`:
// analytic ray/cylinder intersection.
double oracle_brightness(const Vec3& o, const Vec3& d, double radius, double length, double depth) {
  const double a = d.x() * d.x() + d.y() * d.y();
  const double b = 2 * (o.x() * d.x() + o.y() * d.y());
  const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
  double t = std::numeric_limits<double>::infinity();
  if (a > 1e-15) t = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
  if (o.z() + t * d.z() > length) return 0.0;
  return std::clamp(1.0 - t / depth, 0.0, 1.0);
}

// Cumulative turning angle of each bend, in degrees, from the
// tangents of the waypoint polyline (consecutive straight samples split bends).
std::vector<double> bend_angles(const std::vector<Vec3>& waypoints) {
  std::vector<double> bends;
  double current = 0.0;
  for (std::size_t i = 2; i < waypoints.size(); ++i) {
    const Vec3 t0 = (waypoints[i - 1] - waypoints[i - 2]).normalized();
    const Vec3 t1 = (waypoints[i] - waypoints[i - 1]).normalized();
    const double angle = std::acos(std::clamp(t0.dot(t1), -1.0, 1.0)) * 180.0 / M_PI;
    if (angle > 0.5) {
      current += angle;
    } else if (current > 0) {
      bends.push_back(current);
      current = 0;
    }
  }
  if (current > 0) bends.push_back(current);
  return bends;
}

const EnvConfig kEnv{};

}  // namespace

TEST_CASE("straight tube arc length") {
  const auto tube = TubeModel::build(straight_spec(300));
  CHECK(std::abs(tube.total_length() - 300.0) <= 0.1);
  const auto& s = tube.samples();
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].arc > s[i - 1].arc);
}

TEST_CASE("quarter circle arc length") {
  const auto tube = TubeModel::build(quarter_circle_spec(100));
  CHECK(std::abs(tube.total_length() - 50 * M_PI) <= 0.2);
  CHECK(tube.min_bend_radius() >= tube.radius());
}

TEST_CASE("degenerate tube specs are rejected") {
  TubeSpec few = straight_spec(20);
  few.waypoints.resize(3);
  CHECK_THROWS_AS(TubeModel::build(few), std::invalid_argument);

  TubeSpec repeated = straight_spec(100);
  repeated.waypoints[3] = repeated.waypoints[2];
  CHECK_THROWS_AS(TubeModel::build(repeated), std::invalid_argument);

  TubeSpec corner;
  corner.id = "corner";
  corner.waypoints = {{0, 0, 0}, {0, 0, 10}, {0, 0, 20}, {10, 0, 20}, {20, 0, 20}, {30, 0, 20}};
  CHECK_THROWS_AS(TubeModel::build(corner), std::invalid_argument);
}

TEST_CASE("shipped tube fixtures match the builtin tubes") {
  for (const auto& id : builtin_tube_ids()) {
    const TubeSpec file = load_tube_spec(testing::data_path("tubes/" + id + ".json"));
    const TubeSpec builtin = builtin_tube_spec(id);
    CHECK(file.id == builtin.id);
    CHECK(file.radius_mm == builtin.radius_mm);
    REQUIRE(file.waypoints.size() == builtin.waypoints.size());
    for (std::size_t i = 0; i < file.waypoints.size(); ++i) CHECK(file.waypoints[i] == builtin.waypoints[i]);
  }
}

TEST_CASE("builtin tubes have the advertised bend structure") {
  auto bends_of = [](const std::string& id) {
    return bend_angles(load_tube_spec(testing::data_path("tubes/" + id + ".json")).waypoints);
  };
  CHECK(bends_of("tube0").empty());
  const auto b1 = bends_of("tube1");
  REQUIRE(b1.size() == 1);
  CHECK(b1[0] == doctest::Approx(90).epsilon(0.02));
  const auto b2 = bends_of("tube2");
  REQUIRE(b2.size() == 2);
  for (double a : b2) CHECK(a > 90);
  const auto b3 = bends_of("tube3");
  CHECK(b3.size() == 4);
  for (double a : b3) CHECK(a > 90);
  for (const auto& id : builtin_tube_ids()) {
    const auto tube = resolve_tube(id);
    CHECK(tube.min_bend_radius() >= tube.radius());
  }
}

TEST_CASE("tube spec files round trip and report bad input") {
  const TubeSpec spec = builtin_tube_spec("tube2");
  const TubeSpec back = tube_spec_from_json(tube_spec_to_json(spec), "rt");
  CHECK(back.waypoints == spec.waypoints);
  CHECK_THROWS_WITH_AS(tube_spec_from_json(R"({"id":"x","radius_mm":20})", "bad.json"),
                       doctest::Contains("waypoints"), FormatError);
  CHECK_THROWS_WITH_AS(load_tube_spec("/nonexistent/tube.json"), doctest::Contains("/nonexistent/tube.json"),
                       FormatError);
}

TEST_CASE("on-axis observation is mirror symmetric with a dark centre") {
  const auto tube = resolve_tube("tube0");
  const auto state = pose_capsule(tube, Vec3(0, 0, 100), Vec3(0, 0, 1), kEnv);
  const Observation obs = observe(tube, state, kEnv);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      CHECK(std::abs(obs[r * 4 + c] - obs[r * 4 + 3 - c]) <= 1e-9);
      CHECK(std::abs(obs[r * 4 + c] - obs[(3 - r) * 4 + c]) <= 1e-9);
    }
  for (int centre : {5, 6, 9, 10})
    for (int corner : {0, 3, 12, 15}) CHECK(obs[centre] <= obs[corner]);
}

TEST_CASE("observation matches analytic ray casting in a straight tube") {
  const auto tube = resolve_tube("tube0");
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const double r = 12.0 * std::sqrt(rng.uniform()), phi = 2 * M_PI * rng.uniform();
    const Vec3 pos(r * std::cos(phi), r * std::sin(phi), rng.uniform(20, 280));
    const Vec3 fwd(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), 1.0);
    const auto state = pose_capsule(tube, pos, fwd, kEnv);
    const Observation obs = observe(tube, state, kEnv);
    for (int row = 0; row < 4; ++row)
      for (int col = 0; col < 4; ++col) {
        const double expected = oracle_brightness(pos, oracle_direction(state.frame, row, col, kEnv.camera_fov),
                                                  tube.radius(), tube.total_length(), kEnv.view_depth);
        CHECK(obs[row * 4 + col] == doctest::Approx(expected).epsilon(1e-6));
      }
  }
}

TEST_CASE("looking into the upper wall from close range brightens the top row") {
  const auto tube = resolve_tube("tube0");
  const auto state = pose_capsule(tube, Vec3(0, 18, 100), Vec3(0, 1, 1), kEnv);
  CHECK(state.frame.up.dot(Vec3::UnitY()) > 0.5);
  const Observation obs = observe(tube, state, kEnv);
  for (int c = 0; c < 4; ++c) CHECK(obs[c] >= 0.8);
}

TEST_CASE("reward cases from the step examples") {
  const auto tube = resolve_tube("tube0");
  REQUIRE(tube.total_length() == doctest::Approx(300.0));

  SUBCASE("reaching the end") {
    const auto s = pose_capsule(tube, Vec3(0, 0, 295), Vec3(0, 0, 1), kEnv);
    const auto out = step(tube, s, kCenter, kEnv).outcome;
    CHECK(out.reward == 10.0);
    CHECK(out.terminal == Terminal::kReachedEnd);
  }
  SUBCASE("wall contact") {
    const auto s = pose_capsule(tube, Vec3(0, 12, 100), Vec3(0, 1, 1), kEnv);
    const auto res = step(tube, s, kCenter, kEnv);
    CHECK(res.state.in_contact);
    CHECK(res.outcome.reward == doctest::Approx(-0.01).epsilon(1e-12));
    CHECK(res.outcome.cost == 1.0);
    // Slid onto the contact surface, not through the wall.
    CHECK(std::hypot(res.state.position.x(), res.state.position.y()) <= tube.radius() - kEnv.capsule_radius + 1e-9);
  }
  SUBCASE("free motion pays for the remaining distance") {
    const auto s = pose_capsule(tube, Vec3(0, 0, 97), Vec3(0, 0, 1), kEnv);
    const auto out = step(tube, s, kCenter, kEnv).outcome;
    CHECK(out.dist_to_end == doctest::Approx(200.0).epsilon(1e-9));
    CHECK(out.reward == doctest::Approx(-0.2).epsilon(1e-9));
    CHECK(out.cost == 0.0);
    CHECK(out.terminal == Terminal::kRunning);
  }
  SUBCASE("horizon") {
    EnvConfig env = kEnv;
    env.horizon = 5;
    auto s = pose_capsule(tube, Vec3(0, 0, 10), Vec3(0, 0, 1), env);
    s.steps = 4;
    CHECK(step(tube, s, kCenter, env).outcome.terminal == Terminal::kHorizonExhausted);
  }
  SUBCASE("invalid action") {
    const auto s = pose_capsule(tube, Vec3(0, 0, 97), Vec3(0, 0, 1), kEnv);
    CHECK_THROWS_AS(step(tube, s, 5, kEnv), std::invalid_argument);
    CHECK_THROWS_AS(step(tube, s, -1, kEnv), std::invalid_argument);
  }
}

TEST_CASE("actions rotate the frame as specified") {
  Frame f;
  f.forward = Vec3(0.3, -0.2, 1).normalized();
  f.up = Vec3(0, 1, 0);
  f.orthonormalize();
  const double a = kEnv.angular_step;
  const Frame centre = rotate_frame(f, kCenter, a);
  CHECK((centre.forward - f.forward).norm() == 0.0);
  CHECK((centre.up - f.up).norm() == 0.0);

  const Frame up = rotate_frame(f, kUp, a);
  CHECK(up.forward.dot(f.up) == doctest::Approx(std::sin(a)));
  CHECK((up.right - f.right).norm() <= 1e-12);
  const Frame right = rotate_frame(f, kRight, a);
  CHECK(right.forward.dot(f.right) == doctest::Approx(std::sin(a)));
  CHECK((right.up - f.up).norm() <= 1e-12);

  for (auto [p, q] : {std::pair{kUp, kDown}, std::pair{kDown, kUp}, std::pair{kLeft, kRight}, std::pair{kRight, kLeft}}) {
    const Frame back = rotate_frame(rotate_frame(f, p, a), q, a);
    CHECK((back.forward - f.forward).norm() <= 1e-9);
    CHECK((back.up - f.up).norm() <= 1e-9);
    CHECK((back.right - f.right).norm() <= 1e-9);
  }
}

TEST_CASE("random walks keep every simulator invariant") {
  Rng rng(31);
  int steps_taken = 0;
  for (const auto& id : builtin_tube_ids()) {
    const auto tube = resolve_tube(id);
    for (int episode = 0; episode < 5; ++episode) {
      auto state = reset_episode(tube, kEnv, rng);
      double previous_dist = distance_to_end(tube, state);
      for (int t = 0; t < 600; ++t) {
        const int action = static_cast<int>(rng.below(5));
        const auto res = step(tube, state, action, kEnv);
        const auto& out = res.outcome;
        for (double cell : out.observation) CHECK((cell >= 0.0 && cell <= 1.0));
        CHECK((out.cost == 1.0) == res.state.in_contact);
        CHECK((out.cost == 0.0 || out.cost == 1.0));
        const bool goal = out.dist_to_end < kEnv.goal_threshold;
        const bool contact = !goal && res.state.in_contact;
        const bool free = !goal && !res.state.in_contact;
        CHECK(int(goal) + int(contact) + int(free) == 1);
        if (goal) CHECK(out.reward == 10.0);
        if (contact) CHECK(out.reward == -kEnv.beta);
        if (free) CHECK(out.reward == doctest::Approx(-out.dist_to_end * kEnv.eta).epsilon(1e-12));
        CHECK(res.state.frame.orthonormality_error() <= 1e-9);
        CHECK(res.state.nearest_arc >= -tube.entry_cap());
        CHECK(res.state.nearest_arc <= tube.total_length() + kEnv.linear_velocity);
        // Arc progress per step is the step length scaled by at most R / (R - radius)
        // on the inside of a bend of radius R.
        const double bend = tube.min_bend_radius();
        const double max_progress = id == "tube0" ? kEnv.linear_velocity : kEnv.linear_velocity * bend / (bend - tube.radius());
        CHECK(std::abs(previous_dist - out.dist_to_end) <= max_progress + 1e-9);
        previous_dist = out.dist_to_end;
        state = res.state;
        ++steps_taken;
        if (out.terminal != Terminal::kRunning) break;
      }
    }
  }
  CHECK(steps_taken > 1000);
}

TEST_CASE("moving straight down a straight tube approaches the goal") {
  const auto tube = resolve_tube("tube0");
  auto s = pose_capsule(tube, Vec3(1, -2, 5), Vec3(0, 0, 1), kEnv);
  double last = distance_to_end(tube, s);
  while (true) {
    const auto res = step(tube, s, kCenter, kEnv);
    if (res.outcome.terminal == Terminal::kReachedEnd) break;
    CHECK(res.outcome.dist_to_end < last);
    last = res.outcome.dist_to_end;
    s = res.state;
  }
}

TEST_CASE("episode resets") {
  const auto tube = resolve_tube("tube3");
  SUBCASE("deterministic per seed") {
    Rng a(99), b(99);
    const auto sa = reset_episode(tube, kEnv, a), sb = reset_episode(tube, kEnv, b);
    CHECK(std::memcmp(sa.position.data(), sb.position.data(), sizeof(double) * 3) == 0);
    CHECK(std::memcmp(sa.frame.forward.data(), sb.frame.forward.data(), sizeof(double) * 3) == 0);
  }
  SUBCASE("jitter stays within bounds and off the wall") {
    Rng rng(5);
    const Vec3 start = tube.samples().front().point;
    const Vec3 axis = tube.samples().front().tangent;
    for (int i = 0; i < 1000; ++i) {
      const auto s = reset_episode(tube, kEnv, rng);
      CHECK_FALSE(s.in_contact);
      CHECK((s.position - start).norm() <= kEnv.reset_lateral_jitter + 1e-12);
      CHECK(std::acos(std::min(1.0, s.frame.forward.dot(axis))) <= kEnv.reset_angular_jitter + 1e-12);
    }
  }
  SUBCASE("zero jitter starts on the centerline") {
    EnvConfig env = kEnv;
    env.reset_lateral_jitter = 0;
    env.reset_angular_jitter = 0;
    Rng rng(1);
    const auto s = reset_episode(tube, env, rng);
    CHECK(s.position == tube.samples().front().point);
    CHECK((s.frame.forward - tube.samples().front().tangent).norm() <= 1e-12);
  }
}

TEST_CASE("distance travelled") {
  const auto straight = resolve_tube("tube0");
  std::vector<CapsuleState> still(5);
  for (auto& s : still) s.position = Vec3(0, 0, 50);
  CHECK(distance_traveled(still, straight) == 0.0);

  std::vector<CapsuleState> glide;
  for (double z = 0; z <= 300; z += 3) {
    glide.emplace_back();
    glide.back().position = Vec3(0, 0, z);
  }
  CHECK(distance_traveled(glide, straight) == doctest::Approx(1.0).epsilon(0.01));

  const auto quarter = TubeModel::build(quarter_circle_spec(100));
  std::vector<CapsuleState> chord(2);
  chord[0].position = quarter.spec().waypoints.front();
  chord[1].position = quarter.spec().waypoints.back();
  const double expected = 100 * std::sqrt(2.0) / (50 * M_PI);
  CHECK(distance_traveled(chord, quarter) == doctest::Approx(expected).epsilon(0.005));
  CHECK(distance_traveled(chord, quarter) < 1.0);
}

TEST_CASE("identical action sequences replay bit for bit") {
  const auto tube = resolve_tube("tube2");
  auto run = [&] {
    Rng rng(12);
    auto s = reset_episode(tube, kEnv, rng);
    std::vector<double> trace;
    for (int t = 0; t < 300; ++t) {
      const auto res = step(tube, s, static_cast<int>(rng.below(5)), kEnv);
      trace.insert(trace.end(), res.state.position.data(), res.state.position.data() + 3);
      trace.insert(trace.end(), res.outcome.observation.begin(), res.outcome.observation.end());
      trace.push_back(res.outcome.reward);
      s = res.state;
    }
    return trace;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("trajectory csv and observation rendering") {
  TrajectoryRow row;
  row.step = 3;
  row.position = Vec3(1, 2, 3.5);
  row.action = 4;
  row.reward = -0.01;
  row.cost = 1;
  row.contact = true;
  row.dist_mm = 120.25;
  CHECK(trajectory_csv({row}) == "step,x,y,z,action,reward,cost,contact,dist_mm\n3,1,2,3.5,4,-0.01,1,1,120.25\n");

  Observation obs{};
  obs[5] = 0.5;
  const std::string text = render_observation(obs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(text.find("0.000 0.500 0.000 0.000\n") != std::string::npos);
}

TEST_CASE("env config validation") {
  EnvConfig env;
  CHECK_NOTHROW(env.validate());
  env.view_depth = 0;
  CHECK_THROWS_WITH_AS(env.validate(), doctest::Contains("view_depth"), std::invalid_argument);
}
