#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "safenav/common/rng.hpp"
#include "safenav/tubesim/tube.hpp"

namespace safenav::sim {

inline constexpr int kGridSize = 4;
inline constexpr int kCellCount = kGridSize * kGridSize;

// Action indices as seen by the policy head.
enum Action : int { kCenter = 0, kUp = 1, kDown = 2, kRight = 3, kLeft = 4 };
inline constexpr int kActionCount = 5;

// Environment constants. One step is one simulated second.
struct EnvConfig {
  double linear_velocity = 3.0;   // mm per step
  // rad per step; 0.017 is the physical turn rate, 0.05 lets the capsule
  // negotiate the shipped bends within the horizon.
  double angular_step = 0.05;
  double eta = 0.001;             // distance penalty per mm
  double beta = 0.01;             // contact penalty
  int horizon = 1000;             // steps
  double goal_threshold = 10.0;   // mm of centerline left
  double camera_fov = M_PI / 2.0; // full angle, rad
  double view_depth = 60.0;       // mm at which brightness reaches 0
  double capsule_radius = 7.0;    // contact sphere, mm
  double reset_lateral_jitter = 2.0;   // mm
  double reset_angular_jitter = 0.05;  // rad

  // Throws std::invalid_argument naming the first non-positive field.
  void validate() const;
};

// Row-major 4x4 brightness grid; cell 0 is upper-left, 15 bottom-right.
using Observation = std::array<double, kCellCount>;

struct CapsuleState {
  Vec3 position = Vec3::Zero();
  Frame frame;
  double nearest_arc = 0.0;     // arc coordinate of the nearest centerline point
  std::size_t nearest_segment = 0;
  bool in_contact = false;
  int steps = 0;
};

enum class Terminal { kRunning, kReachedEnd, kHorizonExhausted };

struct StepOutcome {
  Observation observation{};
  double reward = 0.0;
  double cost = 0.0;
  double dist_to_end = 0.0;  // mm of centerline remaining after the move
  Terminal terminal = Terminal::kRunning;
};

struct StepResult {
  CapsuleState state;
  StepOutcome outcome;
};

// Distance along the ray to the tube wall; +inf if the ray leaves through the
// far end or travels beyond `max_distance` first.
double cast_ray(const TubeModel& tube, const Vec3& origin, const Vec3& direction,
                std::size_t hint_segment, double max_distance);

// Unit ray direction through the center of grid cell (row, col).
Vec3 cell_direction(const Frame& frame, int row, int col, double fov);

Observation observe(const TubeModel& tube, const CapsuleState& capsule, const EnvConfig& config);

// Applies `action` (0 center, 1 up, 2 down, 3 right, 4 left). Throws
// std::invalid_argument for any other index.
StepResult step(const TubeModel& tube, const CapsuleState& capsule, int action,
                const EnvConfig& config);

// Rotates the frame for one action without moving.
Frame rotate_frame(const Frame& frame, int action, double angle);

CapsuleState reset_episode(const TubeModel& tube, const EnvConfig& config, Rng& rng);

// Builds a capsule state at an arbitrary pose; `up` is taken from the
// centerline reference frame at the nearest point.
CapsuleState pose_capsule(const TubeModel& tube, const Vec3& position, const Vec3& forward,
                          const EnvConfig& config);

// Remaining centerline distance for a state.
double distance_to_end(const TubeModel& tube, const CapsuleState& capsule);

// Summed tip displacement normalized by the centerline length.
double distance_traveled(const std::vector<CapsuleState>& trajectory, const TubeModel& tube);

struct TrajectoryRow {
  int step = 0;
  Vec3 position;
  int action = 0;
  double reward = 0.0;
  double cost = 0.0;
  bool contact = false;
  double dist_mm = 0.0;
};

// CSV columns: step,x,y,z,action,reward,cost,contact,dist_mm
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);

// Four lines of four brightness values, for debugging.
std::string render_observation(const Observation& obs);

}  // namespace safenav::sim
