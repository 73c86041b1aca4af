#include "safenav/tubesim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "safenav/common/io.hpp"

namespace safenav::sim {

namespace {

// Sphere-tracing parameters for cast_ray.
constexpr double kMinMarchStep = 0.25;  // mm
constexpr double kHitTolerance = 1e-9;  // mm
constexpr int kMaxMarchSteps = 4096;
constexpr int kBisectionSteps = 60;

constexpr double kContactTolerance = 1e-9;

}  // namespace

void EnvConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("env config: ") + name + " must be positive");
  };
  positive(linear_velocity, "linear_velocity");
  positive(angular_step, "angular_step");
  positive(eta, "eta");
  positive(beta, "beta");
  positive(horizon, "horizon");
  positive(goal_threshold, "goal_threshold");
  positive(camera_fov, "camera_fov");
  positive(view_depth, "view_depth");
  positive(capsule_radius, "capsule_radius");
  if (camera_fov >= M_PI) throw std::invalid_argument("env config: camera_fov must be below pi");
  if (reset_lateral_jitter < 0.0 || reset_angular_jitter < 0.0)
    throw std::invalid_argument("env config: reset jitter must be non-negative");
}

double cast_ray(const TubeModel& tube, const Vec3& origin, const Vec3& direction,
                std::size_t hint_segment, double max_distance) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double radius = tube.radius();
  const double length = tube.total_length();
  std::size_t segment = hint_segment;
  double t = 0.0;
  double t_inside = 0.0;
  for (int iter = 0; iter < kMaxMarchSteps; ++iter) {
    const auto proj = tube.project(origin + t * direction, segment);
    segment = proj.segment;
    const double clearance = std::min(radius - proj.radial_distance, proj.arc + tube.entry_cap());
    if (proj.arc > length || clearance < 0.0) {
      if (t == 0.0) return proj.arc > length ? kInf : 0.0;
      // The last step left the tube; find whether it crossed the wall or the
      // open far end first.
      double lo = t_inside, hi = t;
      bool through_end = proj.arc > length;
      for (int b = 0; b < kBisectionSteps && hi - lo > kHitTolerance; ++b) {
        const double mid = 0.5 * (lo + hi);
        const auto mp = tube.project(origin + mid * direction, segment);
        if (mp.arc > length) {
          hi = mid;
          through_end = true;
        } else if (mp.radial_distance > radius || mp.arc < -tube.entry_cap()) {
          hi = mid;
          through_end = false;
        } else {
          lo = mid;
        }
      }
      return through_end ? kInf : hi;
    }
    if (clearance < kHitTolerance) return t;
    if (t > max_distance) return kInf;
    t_inside = t;
    t += std::max(clearance, kMinMarchStep);
  }
  return kInf;
}

Vec3 cell_direction(const Frame& frame, int row, int col, double fov) {
  const double half = std::tan(0.5 * fov);
  const double u = (2.0 * col + 1.0) / kGridSize - 1.0;  // left -> right
  const double v = 1.0 - (2.0 * row + 1.0) / kGridSize;  // top -> bottom
  return (frame.forward + half * (u * frame.right + v * frame.up)).normalized();
}

Observation observe(const TubeModel& tube, const CapsuleState& capsule, const EnvConfig& config) {
  Observation obs{};
  for (int row = 0; row < kGridSize; ++row) {
    for (int col = 0; col < kGridSize; ++col) {
      const Vec3 dir = cell_direction(capsule.frame, row, col, config.camera_fov);
      const double d = cast_ray(tube, capsule.position, dir, capsule.nearest_segment, config.view_depth);
      obs[row * kGridSize + col] = std::clamp(1.0 - d / config.view_depth, 0.0, 1.0);
    }
  }
  return obs;
}

Frame rotate_frame(const Frame& frame, int action, double angle) {
  Frame out = frame;
  const double c = std::cos(angle), s = std::sin(angle);
  switch (action) {
    case kCenter:
      return out;
    case kUp:
    case kDown: {
      const double sign = action == kUp ? 1.0 : -1.0;
      out.forward = c * frame.forward + sign * s * frame.up;
      out.up = c * frame.up - sign * s * frame.forward;
      break;
    }
    case kRight:
    case kLeft: {
      const double sign = action == kRight ? 1.0 : -1.0;
      out.forward = c * frame.forward + sign * s * frame.right;
      out.right = c * frame.right - sign * s * frame.forward;
      break;
    }
    default:
      throw std::invalid_argument("invalid action index " + std::to_string(action));
  }
  out.orthonormalize();
  return out;
}

double distance_to_end(const TubeModel& tube, const CapsuleState& capsule) {
  return std::max(0.0, tube.total_length() - capsule.nearest_arc);
}

StepResult step(const TubeModel& tube, const CapsuleState& capsule, int action,
                const EnvConfig& config) {
  if (action < 0 || action >= kActionCount)
    throw std::invalid_argument("invalid action index " + std::to_string(action));
  StepResult result;
  CapsuleState& next = result.state;
  next = capsule;
  next.frame = rotate_frame(capsule.frame, action, config.angular_step);
  next.position = capsule.position + config.linear_velocity * next.frame.forward;

  const double limit = tube.radius() - config.capsule_radius;
  const double min_arc = config.capsule_radius - tube.entry_cap();
  auto proj = tube.project(next.position, capsule.nearest_segment);
  bool pushed = false;
  if (proj.radial_distance > limit) {
    // Slide: push the tip back onto the contact surface along the normal.
    next.position = proj.foot + proj.offset * (limit / proj.radial_distance);
    proj = tube.project(next.position, proj.segment);
  }
  if (proj.arc < min_arc) {
    next.position += (min_arc - proj.arc) * tube.samples().front().tangent;
    proj = tube.project(next.position, proj.segment);
    pushed = true;
  }
  next.nearest_arc = proj.arc;
  next.nearest_segment = proj.segment;
  next.in_contact = pushed || proj.radial_distance >= limit - kContactTolerance;
  next.steps = capsule.steps + 1;

  StepOutcome& out = result.outcome;
  out.dist_to_end = distance_to_end(tube, next);
  out.cost = next.in_contact ? 1.0 : 0.0;
  if (out.dist_to_end < config.goal_threshold) {
    out.reward = 10.0;
    out.terminal = Terminal::kReachedEnd;
  } else {
    out.reward = next.in_contact ? -config.beta : -out.dist_to_end * config.eta;
    out.terminal = next.steps >= config.horizon ? Terminal::kHorizonExhausted : Terminal::kRunning;
  }
  out.observation = observe(tube, next, config);
  return result;
}

CapsuleState pose_capsule(const TubeModel& tube, const Vec3& position, const Vec3& forward,
                          const EnvConfig& config) {
  if (!position.allFinite() || !forward.allFinite())
    throw std::invalid_argument("pose_capsule: pose must be finite");
  if (forward.norm() < 1e-12) throw std::invalid_argument("pose_capsule: forward direction must be non-zero");
  CapsuleState state;
  state.position = position;
  const auto proj = tube.project_global(position);
  state.nearest_arc = proj.arc;
  state.nearest_segment = proj.segment;
  state.frame = tube.frame_at_arc(proj.arc);
  state.frame.forward = forward.normalized();
  if (std::abs(state.frame.up.dot(state.frame.forward)) > 0.999) state.frame.up = tube.frame_at_arc(proj.arc).right;
  state.frame.orthonormalize();
  state.in_contact = proj.radial_distance >= tube.radius() - config.capsule_radius - kContactTolerance;
  return state;
}

CapsuleState reset_episode(const TubeModel& tube, const EnvConfig& config, Rng& rng) {
  // Always draw the same number of variates so streams stay aligned.
  const double r = config.reset_lateral_jitter * std::sqrt(rng.uniform());
  const double theta = 2.0 * M_PI * rng.uniform();
  const double tilt_limit = config.reset_angular_jitter / std::sqrt(2.0);
  const double pitch = rng.uniform(-tilt_limit, tilt_limit);
  const double yaw = rng.uniform(-tilt_limit, tilt_limit);

  CapsuleState state;
  state.frame = tube.frame_at_arc(0.0);
  const Vec3 start = tube.samples().front().point;
  state.position = start;
  if (r > 0.0) state.position += r * std::cos(theta) * state.frame.up + r * std::sin(theta) * state.frame.right;
  if (pitch != 0.0) state.frame = rotate_frame(state.frame, kUp, pitch);
  if (yaw != 0.0) state.frame = rotate_frame(state.frame, kRight, yaw);
  const auto proj = tube.project(state.position, 0);
  state.nearest_arc = proj.arc;
  state.nearest_segment = proj.segment;
  state.in_contact = proj.radial_distance >= tube.radius() - config.capsule_radius - kContactTolerance;
  state.steps = 0;
  return state;
}

double distance_traveled(const std::vector<CapsuleState>& trajectory, const TubeModel& tube) {
  double total = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i)
    total += (trajectory[i].position - trajectory[i - 1].position).norm();
  return total / tube.total_length();
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::ostringstream out;
  out << "step,x,y,z,action,reward,cost,contact,dist_mm\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_exact(r.position.x()) << ',' << format_exact(r.position.y()) << ','
        << format_exact(r.position.z()) << ',' << r.action << ',' << format_exact(r.reward) << ','
        << format_exact(r.cost) << ',' << (r.contact ? 1 : 0) << ',' << format_exact(r.dist_mm) << '\n';
  }
  return out.str();
}

std::string render_observation(const Observation& obs) {
  std::ostringstream out;
  for (int row = 0; row < kGridSize; ++row) {
    for (int col = 0; col < kGridSize; ++col) {
      if (col) out << ' ';
      out << format_fixed(obs[row * kGridSize + col], 3);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace safenav::sim
