#include "safenav/tubesim/tube.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "safenav/common/io.hpp"

namespace safenav::sim {

void Frame::orthonormalize() {
  forward.normalize();
  up = (up - up.dot(forward) * forward).normalized();
  right = forward.cross(up);
}

double Frame::orthonormality_error() const {
  return std::max({std::abs(forward.norm() - 1.0), std::abs(up.norm() - 1.0),
                   std::abs(right.norm() - 1.0), std::abs(forward.dot(up)),
                   std::abs(forward.dot(right)), std::abs(up.dot(right)),
                   (forward.cross(up) - right).norm()});
}

namespace {

// Centerline samples are spaced at most this far apart (mm).
constexpr double kSampleSpacing = 0.5;

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 5> kGaussNodes = {0.0, -0.5384693101056831, 0.5384693101056831,
                                               -0.9061798459386640, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.5688888888888889, 0.4786286704993665,
                                                 0.4786286704993665, 0.2369268850561891,
                                                 0.2369268850561891};

struct HermiteBasis {
  double p0, m0, p1, m1;
};

HermiteBasis basis(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2};
}

HermiteBasis basis_d1(double t) {
  const double t2 = t * t;
  return {6 * t2 - 6 * t, 3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t};
}

HermiteBasis basis_d2(double t) { return {12 * t - 6, 6 * t - 4, -12 * t + 6, 6 * t - 2}; }

}  // namespace

namespace {

struct SegmentCoefficients {
  Vec3 p0, m0, p1, m1;
};

SegmentCoefficients segment_at(const std::vector<Vec3>& w, double param, double& local) {
  const auto n = w.size();
  auto i = static_cast<std::size_t>(std::clamp(std::floor(param), 0.0, static_cast<double>(n - 2)));
  local = param - static_cast<double>(i);
  // Phantom end points continue the first/last chord linearly.
  const Vec3 prev = i == 0 ? Vec3(2.0 * w[0] - w[1]) : w[i - 1];
  const Vec3 next = i + 2 >= n ? Vec3(2.0 * w[n - 1] - w[n - 2]) : w[i + 2];
  return {w[i], 0.5 * (w[i + 1] - prev), w[i + 1], 0.5 * (next - w[i])};
}

Vec3 combine(const SegmentCoefficients& s, const HermiteBasis& h) {
  return h.p0 * s.p0 + h.m0 * s.m0 + h.p1 * s.p1 + h.m1 * s.m1;
}

Vec3 any_perpendicular(const Vec3& t) {
  const Vec3 reference = std::abs(t.dot(Vec3::UnitY())) < 0.9 ? Vec3::UnitY() : Vec3::UnitZ();
  return (reference - reference.dot(t) * t).normalized();
}

}  // namespace

Vec3 TubeModel::point_at(double param) const {
  double t;
  const auto s = segment_at(spec_.waypoints, param, t);
  return combine(s, basis(t));
}

Vec3 TubeModel::derivative_at(double param) const {
  double t;
  const auto s = segment_at(spec_.waypoints, param, t);
  return combine(s, basis_d1(t));
}

Vec3 TubeModel::second_derivative_at(double param) const {
  double t;
  const auto s = segment_at(spec_.waypoints, param, t);
  return combine(s, basis_d2(t));
}

double TubeModel::arc_at_param(double param) const {
  param = std::clamp(param, 0.0, max_param());
  auto it = std::upper_bound(samples_.begin(), samples_.end(), param,
                             [](double v, const CenterlineSample& s) { return v < s.param; });
  if (it == samples_.end()) return samples_.back().arc;
  const auto& lo = *(it - 1);
  // Integrate exactly over the partial interval instead of interpolating.
  const double half = 0.5 * (param - lo.param);
  const double mid = 0.5 * (param + lo.param);
  double arc = lo.arc;
  for (std::size_t k = 0; k < kGaussNodes.size(); ++k)
    arc += half * kGaussWeights[k] * derivative_at(mid + half * kGaussNodes[k]).norm();
  return arc;
}

TubeModel TubeModel::build(const TubeSpec& spec) {
  if (spec.waypoints.size() < 4)
    throw std::invalid_argument("tube '" + spec.id + "': need at least 4 waypoints, got " +
                                std::to_string(spec.waypoints.size()));
  if (!(spec.radius_mm > 0.0))
    throw std::invalid_argument("tube '" + spec.id + "': radius must be positive");
  if (!(spec.entry_cap_mm >= 0.0))
    throw std::invalid_argument("tube '" + spec.id + "': entry cap offset must be non-negative");
  for (std::size_t i = 0; i + 1 < spec.waypoints.size(); ++i) {
    if (!spec.waypoints[i].allFinite())
      throw std::invalid_argument("tube '" + spec.id + "': waypoint " + std::to_string(i) +
                                  " is not finite");
    if ((spec.waypoints[i + 1] - spec.waypoints[i]).norm() < 1e-9)
      throw std::invalid_argument("tube '" + spec.id + "': waypoints " + std::to_string(i) +
                                  " and " + std::to_string(i + 1) + " coincide");
  }

  TubeModel tube;
  tube.spec_ = spec;
  const auto& w = spec.waypoints;
  double arc = 0.0;
  double min_radius = std::numeric_limits<double>::infinity();
  auto push_sample = [&](double param) {
    CenterlineSample s;
    s.param = param;
    s.arc = arc;
    s.point = tube.point_at(param);
    const Vec3 d1 = tube.derivative_at(param);
    s.tangent = d1.normalized();
    const double speed = d1.norm();
    const double curvature = d1.cross(tube.second_derivative_at(param)).norm() / (speed * speed * speed);
    if (curvature > 0.0) min_radius = std::min(min_radius, 1.0 / curvature);
    tube.samples_.push_back(s);
  };

  push_sample(0.0);
  for (std::size_t seg = 0; seg + 1 < w.size(); ++seg) {
    const double chord = (w[seg + 1] - w[seg]).norm();
    const int pieces = std::max(8, static_cast<int>(std::ceil(chord / kSampleSpacing)));
    for (int k = 0; k < pieces; ++k) {
      const double a = static_cast<double>(seg) + static_cast<double>(k) / pieces;
      const double b = static_cast<double>(seg) + static_cast<double>(k + 1) / pieces;
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      double piece_length = 0.0;
      for (std::size_t q = 0; q < kGaussNodes.size(); ++q)
        piece_length += half * kGaussWeights[q] * tube.derivative_at(mid + half * kGaussNodes[q]).norm();
      if (!(piece_length > 0.0))
        throw std::invalid_argument("tube '" + spec.id + "': centerline stalls near waypoint " +
                                    std::to_string(seg));
      arc += piece_length;
      push_sample(k + 1 == pieces ? static_cast<double>(seg + 1) : b);
    }
  }
  tube.min_bend_radius_ = min_radius;
  if (min_radius < spec.radius_mm)
    throw std::invalid_argument("tube '" + spec.id + "': bend radius " + std::to_string(min_radius) +
                                " mm is below the tube radius " + std::to_string(spec.radius_mm) +
                                " mm");

  // Rotation-minimizing reference frame by successive projection.
  auto& samples = tube.samples_;
  samples[0].normal = any_perpendicular(samples[0].tangent);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const Vec3& t = samples[i].tangent;
    const Vec3& prev = samples[i - 1].normal;
    samples[i].normal = (prev - prev.dot(t) * t).normalized();
  }

  // Coarse self-proximity check: centerline points far apart along the curve
  // must stay more than one diameter apart in space.
  const double diameter = 2.0 * spec.radius_mm;
  const double min_arc_gap = M_PI * spec.radius_mm + 2.0;
  for (std::size_t i = 0; i < samples.size(); i += 4) {
    for (std::size_t j = i + 4; j < samples.size(); j += 4) {
      if (samples[j].arc - samples[i].arc < min_arc_gap) continue;
      if ((samples[j].point - samples[i].point).norm() < diameter - 1e-6)
        throw std::invalid_argument("tube '" + spec.id + "': centerline passes within one diameter "
                                    "of itself near arc " + std::to_string(samples[i].arc) + " mm");
    }
  }
  return tube;
}

double TubeModel::segment_distance2(const Vec3& p, std::size_t i, double& t) const {
  const Vec3& a = samples_[i].point;
  const Vec3 ab = samples_[i + 1].point - a;
  t = (p - a).dot(ab) / ab.squaredNorm();
  const std::size_t last = samples_.size() - 2;
  // The outer ends extend as straight rays.
  if (i != 0) t = std::max(t, 0.0);
  if (i != last) t = std::min(t, 1.0);
  return (a + t * ab - p).squaredNorm();
}

TubeModel::Projection TubeModel::make_projection(const Vec3& p, std::size_t i, double t) const {
  Projection out;
  out.segment = i;
  const auto& a = samples_[i];
  const auto& b = samples_[i + 1];
  out.foot = a.point + t * (b.point - a.point);
  out.arc = a.arc + t * (b.arc - a.arc);
  out.offset = p - out.foot;
  out.radial_distance = out.offset.norm();
  return out;
}

TubeModel::Projection TubeModel::project(const Vec3& p, std::size_t hint) const {
  const std::size_t last = samples_.size() - 2;
  std::size_t i = std::min(hint, last);
  double t;
  double best = segment_distance2(p, i, t);
  double t_probe;
  for (;;) {
    if (i > 0) {
      const double d = segment_distance2(p, i - 1, t_probe);
      if (d < best) {
        best = d;
        --i;
        t = t_probe;
        continue;
      }
    }
    if (i < last) {
      const double d = segment_distance2(p, i + 1, t_probe);
      if (d < best) {
        best = d;
        ++i;
        t = t_probe;
        continue;
      }
    }
    break;
  }
  segment_distance2(p, i, t);
  return make_projection(p, i, t);
}

TubeModel::Projection TubeModel::project_global(const Vec3& p) const {
  std::size_t best_i = 0;
  double best = std::numeric_limits<double>::infinity();
  double t;
  for (std::size_t i = 0; i + 1 < samples_.size(); ++i) {
    const double d = segment_distance2(p, i, t);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  segment_distance2(p, best_i, t);
  return make_projection(p, best_i, t);
}

Frame TubeModel::frame_at_arc(double s) const {
  s = std::clamp(s, 0.0, total_length());
  auto it = std::lower_bound(samples_.begin(), samples_.end(), s,
                             [](const CenterlineSample& a, double v) { return a.arc < v; });
  const auto& sample = it == samples_.end() ? samples_.back() : *it;
  Frame f;
  f.forward = sample.tangent;
  f.up = sample.normal;
  f.orthonormalize();
  return f;
}

// ---------------------------------------------------------------------------
// Spec files

TubeSpec tube_spec_from_json(const std::string& text, const std::string& source) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": not valid JSON (" + e.what() + ")");
  }
  TubeSpec spec;
  if (!doc.is_object()) throw FormatError(source + ": expected an object");
  if (!doc.contains("id") || !doc["id"].is_string()) throw FormatError(source + ": missing string field 'id'");
  spec.id = doc["id"].get<std::string>();
  if (doc.contains("radius_mm")) {
    if (!doc["radius_mm"].is_number()) throw FormatError(source + ": field 'radius_mm' must be a number");
    spec.radius_mm = doc["radius_mm"].get<double>();
  }
  if (doc.contains("entry_cap_mm")) {
    if (!doc["entry_cap_mm"].is_number()) throw FormatError(source + ": field 'entry_cap_mm' must be a number");
    spec.entry_cap_mm = doc["entry_cap_mm"].get<double>();
  }
  if (!doc.contains("waypoints") || !doc["waypoints"].is_array())
    throw FormatError(source + ": missing array field 'waypoints'");
  for (std::size_t i = 0; i < doc["waypoints"].size(); ++i) {
    const auto& p = doc["waypoints"][i];
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number())
      throw FormatError(source + ": waypoint " + std::to_string(i) + " must be [x, y, z]");
    spec.waypoints.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  return spec;
}

std::string tube_spec_to_json(const TubeSpec& spec) {
  using nlohmann::json;
  json doc;
  doc["id"] = spec.id;
  doc["radius_mm"] = spec.radius_mm;
  doc["entry_cap_mm"] = spec.entry_cap_mm;
  json pts = json::array();
  for (const auto& p : spec.waypoints) pts.push_back({p.x(), p.y(), p.z()});
  doc["waypoints"] = std::move(pts);
  return doc.dump(1) + "\n";
}

TubeSpec load_tube_spec(const std::filesystem::path& path) {
  return tube_spec_from_json(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Built-in tubes, drawn with a turtle that lays waypoints roughly every 10 mm.

namespace {

class Turtle {
 public:
  Turtle() { points_.push_back(position_); }

  Turtle& straight(double length) {
    const int n = std::max(1, static_cast<int>(std::round(length / kStep)));
    for (int i = 0; i < n; ++i) {
      position_ += (length / n) * frame_.forward;
      points_.push_back(position_);
    }
    return *this;
  }

  // Circular arc of `radius` turning by `degrees` toward `direction`
  // (a unit vector of the current frame perpendicular to forward).
  Turtle& bend(double radius, double degrees, char direction) {
    const double total = degrees * M_PI / 180.0;
    const int n = std::max(2, static_cast<int>(std::ceil(radius * total / kStep)));
    for (int i = 0; i < n; ++i) {
      const double step = total / n;
      Vec3 side = pick(direction);
      const Vec3 center = position_ + radius * side;
      // Rotate position and frame about the axis forward x side.
      const Eigen::AngleAxisd rot(step, frame_.forward.cross(side).normalized());
      position_ = center + rot * (position_ - center);
      frame_.forward = rot * frame_.forward;
      frame_.up = rot * frame_.up;
      frame_.orthonormalize();
      points_.push_back(position_);
    }
    return *this;
  }

  std::vector<Vec3> points() const { return points_; }

 private:
  static constexpr double kStep = 10.0;

  Vec3 pick(char direction) const {
    switch (direction) {
      case 'u': return frame_.up;
      case 'd': return -frame_.up;
      case 'r': return frame_.right;
      case 'l': return -frame_.right;
      default: throw std::invalid_argument("bad turtle direction");
    }
  }

  Vec3 position_ = Vec3::Zero();
  Frame frame_;
  std::vector<Vec3> points_;
};

}  // namespace

std::vector<std::string> builtin_tube_ids() { return {"tube0", "tube1", "tube2", "tube3"}; }

TubeSpec builtin_tube_spec(const std::string& id) {
  constexpr double kBend = 80.0;
  Turtle t;
  if (id == "tube0") {
    t.straight(300);
  } else if (id == "tube1") {
    t.straight(100).bend(kBend, 90, 'r').straight(100);
  } else if (id == "tube2") {
    t.straight(80).bend(kBend, 110, 'u').straight(60).bend(kBend, 110, 'l').straight(80);
  } else if (id == "tube3") {
    t.straight(60).bend(kBend, 100, 'r').straight(40).bend(kBend, 100, 'u').straight(40);
    t.bend(kBend, 100, 'l').straight(40).bend(kBend, 100, 'd').straight(60);
  } else {
    throw std::invalid_argument("unknown builtin tube '" + id + "'");
  }
  return {id, 20.0, 10.0, t.points()};
}

TubeModel resolve_tube(const std::string& id_or_path) {
  const auto ids = builtin_tube_ids();
  if (std::find(ids.begin(), ids.end(), id_or_path) != ids.end())
    return TubeModel::build(builtin_tube_spec(id_or_path));
  if (!std::filesystem::exists(id_or_path))
    throw FormatError("tube '" + id_or_path + "' is neither a builtin id nor an existing file");
  return TubeModel::build(load_tube_spec(id_or_path));
}

}  // namespace safenav::sim
