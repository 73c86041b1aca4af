#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace safenav::sim {

using Vec3 = Eigen::Vector3d;

// Orthonormal right-handed camera frame: right = forward x up.
struct Frame {
  Vec3 forward = Vec3::UnitZ();
  Vec3 up = Vec3::UnitY();
  Vec3 right = -Vec3::UnitX();

  void orthonormalize();
  double orthonormality_error() const;
};

struct TubeSpec {
  std::string id;
  double radius_mm = 20.0;
  // The entry is closed by a flat cap this far behind the first waypoint.
  double entry_cap_mm = 10.0;
  std::vector<Vec3> waypoints;
};

// One entry of the dense centerline table. `param` is the spline parameter
// (waypoint i sits at param i); `arc` is the arc length from the start.
struct CenterlineSample {
  double param = 0.0;
  double arc = 0.0;
  Vec3 point;
  Vec3 tangent;
  Vec3 normal;  // rotation-minimizing frame, used as the reference "up"
};

// Rigid tube: the set of points within `radius` of a C1 Catmull-Rom centerline
// through the waypoints. The far end is open; the entry is capped at arc
// coordinate -entry_cap. Both ends continue as straight extensions for
// geometric queries. Immutable after construction.
class TubeModel {
 public:
  // Throws std::invalid_argument on fewer than 4 waypoints, repeated
  // consecutive waypoints, a bend tighter than the tube radius, or a centerline
  // that passes within one diameter of itself.
  static TubeModel build(const TubeSpec& spec);

  const std::string& id() const { return spec_.id; }
  double radius() const { return spec_.radius_mm; }
  double entry_cap() const { return spec_.entry_cap_mm; }
  double total_length() const { return samples_.back().arc; }
  const TubeSpec& spec() const { return spec_; }
  double max_param() const { return static_cast<double>(spec_.waypoints.size() - 1); }

  Vec3 point_at(double param) const;
  Vec3 derivative_at(double param) const;
  Vec3 second_derivative_at(double param) const;
  double arc_at_param(double param) const;
  double min_bend_radius() const { return min_bend_radius_; }

  const std::vector<CenterlineSample>& samples() const { return samples_; }

  struct Projection {
    std::size_t segment = 0;  // between samples[segment] and samples[segment + 1]
    double arc = 0.0;         // < 0 or > total_length on the straight extensions
    Vec3 foot;
    Vec3 offset;              // point - foot, perpendicular to the centerline
    double radial_distance = 0.0;
  };

  // Nearest centerline point by local descent from segment `hint`. Valid when
  // the hint is near the answer (consecutive queries along a path).
  Projection project(const Vec3& p, std::size_t hint) const;
  // Exhaustive nearest-segment search.
  Projection project_global(const Vec3& p) const;

  // Centerline frame at arc length s (clamped to the tube).
  Frame frame_at_arc(double s) const;

 private:
  TubeSpec spec_;
  std::vector<CenterlineSample> samples_;
  double min_bend_radius_ = 0.0;

  double segment_distance2(const Vec3& p, std::size_t i, double& t) const;
  Projection make_projection(const Vec3& p, std::size_t i, double t) const;
};

TubeSpec tube_spec_from_json(const std::string& text, const std::string& source = "<memory>");
std::string tube_spec_to_json(const TubeSpec& spec);
TubeSpec load_tube_spec(const std::filesystem::path& path);

// The four shipped environments: tube0 straight, tube1 one 90 degree bend,
// tube2 two bends over 90 degrees, tube3 four bends over 90 degrees.
std::vector<std::string> builtin_tube_ids();
TubeSpec builtin_tube_spec(const std::string& id);

// Accepts a builtin id or a path to a tube spec file.
TubeModel resolve_tube(const std::string& id_or_path);

}  // namespace safenav::sim
