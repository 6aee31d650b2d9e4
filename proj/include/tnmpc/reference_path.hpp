#pragma once

#include "tnmpc/vehicle_model.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tnmpc {

enum class SegmentTag { kStraight = 0, kCurve = 1 };

std::string_view to_string(SegmentTag tag);

struct PathPoint {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  ///< unwrapped along the path [rad]
  double curvature = 0.0;
  SegmentTag tag = SegmentTag::kStraight;
};

struct PathSample : PathPoint {
  double s = 0.0;
};

/// Planar path composed of lines and constant-curvature arcs.
///
/// Geometry is evaluated analytically from the segment list; the dense sample
/// table is used for nearest-point seeding and export.
class Path {
 public:
  struct Segment {
    double length = 0.0;
    double curvature = 0.0;  ///< 0 for straights, signed 1/R for arcs (positive = left turn)
  };

  /// Chains `segments` starting at (x0, y0) with initial heading `heading0`.
  Path(double x0, double y0, double heading0, std::vector<Segment> segments, bool closed,
       double max_spacing = 0.05);

  static Path straight_line(double x0, double y0, double heading, double length,
                            double max_spacing = 0.05);

  /// Point at arclength `s` (wrapped on closed paths, clamped on open ones).
  PathPoint at(double s) const;
  double wrap(double s) const;

  double total_length() const { return total_length_; }
  bool closed() const { return closed_; }
  const std::vector<PathSample>& samples() const { return samples_; }
  std::size_t segment_count() const { return segments_.size(); }
  /// Start station of segment `i`.
  double segment_start(std::size_t i) const { return starts_[i].s; }

  /// CSV with header `s,x,y,heading,curvature,tag`.
  void write_csv(const std::string& file) const;

 private:
  std::vector<Segment> segments_;
  std::vector<PathSample> starts_;  // pose at the start of each segment
  std::vector<PathSample> samples_;
  double total_length_ = 0.0;
  bool closed_ = false;
};

/// Figure-8: two straights of `straight_len` crossing at the origin, joined by a
/// right-hand and a left-hand arc of `radius`. Starts at the beginning of the
/// first straight. Throws ConfigError unless 0 < 2 * radius <= straight_len.
Path build_eight_track(double straight_len = 30.0, double radius = 10.0,
                       double max_spacing = 0.05);

/// Sweep angle of each arc of the figure-8 [rad].
double eight_track_arc_angle(double straight_len, double radius);

struct Projection {
  double s = 0.0;              ///< closest station [m]
  double lateral_error = 0.0;  ///< signed, positive left of the travel direction [m]
};

/// Keeps the last returned station so that successive projections stay on the
/// branch being tracked (the figure-8 crosses itself).
struct ProjectionCursor {
  std::optional<double> station;
  double search_back = 2.0;    ///< [m]
  double search_ahead = 10.0;  ///< [m]
};

Projection project(const Path& path, const Eigen::Vector2d& point,
                   ProjectionCursor* cursor = nullptr);

struct ReferenceHorizon {
  std::vector<StateVec> states;    ///< N+1 reference states
  std::vector<ControlVec> inputs;  ///< N reference inputs
  std::vector<double> stations;    ///< tractor reference stations (unwrapped)
};

struct LookaheadConfig {
  double lookahead = 1.6;  ///< measured from the tractor front axle [m]
  int horizon = 15;
  double dt = 0.2;
};

/// Space-based reference: tractor targets at `lookahead + k v dt` ahead of the
/// projected front-axle station, trailer targets l + Li behind each tractor
/// target, inputs held at the latest measured steering angles.
ReferenceHorizon lookahead_reference(const Path& path, const VehicleState& pose, double v,
                                     const Control& measured_steering, const VehicleGeometry& geom,
                                     const LookaheadConfig& cfg, ProjectionCursor* cursor = nullptr);

}  // namespace tnmpc
