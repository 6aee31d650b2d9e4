#include "tnmpc/reference_path.hpp"

#include "tnmpc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace tnmpc {

std::string_view to_string(SegmentTag tag) {
  return tag == SegmentTag::kStraight ? "straight" : "curve";
}

namespace {

PathPoint advance(const PathPoint& start, double curvature, double ds) {
  PathPoint p;
  p.curvature = curvature;
  p.tag = curvature == 0.0 ? SegmentTag::kStraight : SegmentTag::kCurve;
  p.heading = start.heading + curvature * ds;
  if (curvature == 0.0) {
    p.x = start.x + ds * std::cos(start.heading);
    p.y = start.y + ds * std::sin(start.heading);
  } else {
    const double r = 1.0 / curvature;
    p.x = start.x + r * (std::sin(p.heading) - std::sin(start.heading));
    p.y = start.y - r * (std::cos(p.heading) - std::cos(start.heading));
  }
  return p;
}

}  // namespace

Path::Path(double x0, double y0, double heading0, std::vector<Segment> segments, bool closed,
           double max_spacing)
    : segments_(std::move(segments)), closed_(closed) {
  if (segments_.empty()) throw ConfigError("path needs at least one segment");
  if (!(max_spacing > 0.0)) throw ConfigError("path sample spacing must be positive");

  PathSample cur;
  cur.x = x0;
  cur.y = y0;
  cur.heading = heading0;
  for (const auto& seg : segments_) {
    if (!(seg.length > 0.0)) throw ConfigError("path segment length must be positive");
    cur.curvature = seg.curvature;
    cur.tag = seg.curvature == 0.0 ? SegmentTag::kStraight : SegmentTag::kCurve;
    starts_.push_back(cur);

    const int n = static_cast<int>(std::ceil(seg.length / max_spacing));
    for (int k = 0; k < n; ++k) {
      const double ds = seg.length * k / n;
      PathSample smp;
      static_cast<PathPoint&>(smp) = advance(cur, seg.curvature, ds);
      smp.s = cur.s + ds;
      samples_.push_back(smp);
    }
    const PathPoint end = advance(cur, seg.curvature, seg.length);
    const double s_end = cur.s + seg.length;
    static_cast<PathPoint&>(cur) = end;
    cur.s = s_end;
  }
  total_length_ = cur.s;
  if (!closed_) {
    PathSample last = cur;
    last.curvature = segments_.back().curvature;
    last.tag = starts_.back().tag;
    samples_.push_back(last);
  }
}

Path Path::straight_line(double x0, double y0, double heading, double length,
                         double max_spacing) {
  return Path(x0, y0, heading, {{length, 0.0}}, false, max_spacing);
}

double Path::wrap(double s) const {
  if (!closed_) return std::clamp(s, 0.0, total_length_);
  double w = std::fmod(s, total_length_);
  if (w < 0.0) w += total_length_;
  return w;
}

PathPoint Path::at(double s) const {
  const double w = wrap(s);
  auto it = std::upper_bound(starts_.begin(), starts_.end(), w,
                             [](double v, const PathSample& p) { return v < p.s; });
  const std::size_t idx = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
  const PathSample& start = starts_[idx];
  return advance(start, segments_[idx].curvature, w - start.s);
}

void Path::write_csv(const std::string& file) const {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file + " for writing");
  out << "s,x,y,heading,curvature,tag\n";
  out.precision(10);
  for (const auto& p : samples_) {
    out << p.s << ',' << p.x << ',' << p.y << ',' << p.heading << ',' << p.curvature << ','
        << to_string(p.tag) << '\n';
  }
  if (!out) throw IoError("failed writing " + file);
}

double eight_track_arc_angle(double straight_len, double radius) {
  const double c = std::hypot(0.5 * straight_len, radius);
  return std::numbers::pi + 2.0 * std::asin(radius / c);
}

Path build_eight_track(double straight_len, double radius, double max_spacing) {
  if (!(straight_len > 0.0) || !(radius > 0.0) || 2.0 * radius > straight_len) {
    throw ConfigError("figure-8 track needs 0 < 2 * radius <= straight_len");
  }
  // circles of `radius` centred at (+-c, 0); the straights are their common
  // inner tangents through the origin, inclined by +-alpha
  const double c = std::hypot(0.5 * straight_len, radius);
  const double alpha = std::asin(radius / c);
  const double sweep = eight_track_arc_angle(straight_len, radius);
  const double x0 = -c * std::cos(alpha) * std::cos(alpha);
  const double y0 = -c * std::cos(alpha) * std::sin(alpha);
  const double k = 1.0 / radius;
  return Path(x0, y0, alpha,
              {{straight_len, 0.0}, {sweep * radius, -k}, {straight_len, 0.0}, {sweep * radius, k}},
              true, max_spacing);
}

namespace {

double signed_gap(double a, double b, double period, bool closed) {
  double d = a - b;
  if (closed) d = std::remainder(d, period);
  return d;
}

}  // namespace

Projection project(const Path& path, const Eigen::Vector2d& point, ProjectionCursor* cursor) {
  const auto& samples = path.samples();
  const double period = path.total_length();

  // seed with the closest sample inside the cursor window (or globally)
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  double best_offset = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double offset = 0.0;
    if (cursor && cursor->station) {
      offset = signed_gap(samples[i].s, *cursor->station, period, path.closed());
      if (offset < -cursor->search_back || offset > cursor->search_ahead) continue;
    }
    const double dx = samples[i].x - point.x();
    const double dy = samples[i].y - point.y();
    const double d2 = dx * dx + dy * dy;
    // ties: prefer the smallest station ahead of the cursor
    const double rank = offset < 0.0 ? offset + 1e9 : offset;
    if (d2 < best_d2 || (d2 == best_d2 && rank < best_offset)) {
      best_d2 = d2;
      best = i;
      best_offset = rank;
    }
  }

  // Newton refinement on the analytic geometry
  double s = samples[best].s;
  for (int it = 0; it < 8; ++it) {
    const PathPoint p = path.at(s);
    const double tx = std::cos(p.heading), ty = std::sin(p.heading);
    const double dx = point.x() - p.x, dy = point.y() - p.y;
    const double along = tx * dx + ty * dy;
    const double lateral = tx * dy - ty * dx;
    const double denom = 1.0 - p.curvature * lateral;
    double step = along / (std::abs(denom) > 1e-3 ? denom : 1.0);
    step = std::clamp(step, -0.5, 0.5);
    double next = s + step;
    if (!path.closed()) next = std::clamp(next, 0.0, period);
    const bool done = std::abs(next - s) < 1e-12;
    s = next;
    if (done) break;
  }
  if (path.closed()) s = path.wrap(s);

  const PathPoint p = path.at(s);
  const double tx = std::cos(p.heading), ty = std::sin(p.heading);
  const double lateral = tx * (point.y() - p.y) - ty * (point.x() - p.x);
  if (cursor) cursor->station = s;
  return {s, lateral};
}

ReferenceHorizon lookahead_reference(const Path& path, const VehicleState& pose, double v,
                                     const Control& measured_steering, const VehicleGeometry& geom,
                                     const LookaheadConfig& cfg, ProjectionCursor* cursor) {
  if (cfg.horizon < 1) throw ConfigError("reference horizon must be >= 1");
  const Projection proj = project(path, {pose.xt, pose.yt}, cursor);
  const double front = proj.s + geom.tractor_wheelbase;

  // reference yaw entries carry no weight; shift them by whole turns to sit
  // next to the current yaw so the vectors stay well-scaled
  auto near = [](double heading, double yaw) {
    return heading + 2.0 * std::numbers::pi *
                         std::round((yaw - heading) / (2.0 * std::numbers::pi));
  };

  ReferenceHorizon ref;
  ref.states.reserve(cfg.horizon + 1);
  ref.stations.reserve(cfg.horizon + 1);
  for (int k = 0; k <= cfg.horizon; ++k) {
    const double st = front + cfg.lookahead + k * v * cfg.dt;
    const PathPoint t = path.at(st);
    const PathPoint i = path.at(st - geom.hitch_offset());
    StateVec x;
    x << t.x, t.y, near(t.heading, pose.theta), i.x, i.y, near(i.heading, pose.psi);
    ref.states.push_back(x);
    ref.stations.push_back(st);
  }
  ref.inputs.assign(cfg.horizon, measured_steering.vec());
  return ref;
}

}  // namespace tnmpc
