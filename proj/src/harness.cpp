#include "tnmpc/harness.hpp"

#include "tnmpc/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

namespace tnmpc {

namespace {

EstVec to_est(const std::vector<double>& v) {
  EstVec out;
  for (int i = 0; i < kEstDim; ++i) out(i) = v[i];
  return out;
}

std::vector<double> from_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

ControlVec deg_pair(const KeyValueConfig& kv, const std::string& key, const ControlVec& fallback) {
  const auto v = kv.get_vector(key, 2, {rad2deg(fallback(0)), rad2deg(fallback(1))});
  return ControlVec(deg2rad(v[0]), deg2rad(v[1]));
}

}  // namespace

void ExperimentConfig::finalize() {
  ocp.geom = geom;
  mhe.geom = geom;
  plant.geom = geom;
  mhe.dt = ocp.dt;
}

void ExperimentConfig::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("run.duration must be > 0");
  if (!(transient_s >= 0.0)) throw ConfigError("run.transient must be >= 0");
  if (!(initial_speed >= 0.0)) throw ConfigError("start.v must be >= 0");
  if (!(lookahead >= 0.0)) throw ConfigError("nmpc.lookahead must be >= 0");
  if (!(track.spacing > 0.0)) throw ConfigError("track.spacing must be > 0");
  if (track.straight_only_length < 0.0) throw ConfigError("track.straight_only must be >= 0");
  if (plant.substeps < 1) throw ConfigError("plant.substeps must be >= 1");
  if (!(plant.speed_time_constant > 0.0)) throw ConfigError("plant.speed_tau must be > 0");
  for (const auto* a : {&plant.tractor_actuator, &plant.trailer_actuator}) {
    if (!(a->time_constant > 0.0) || !(a->rate_limit > 0.0) || !(a->mechanical_limit > 0.0) ||
        a->allowance < 0.0) {
      throw ConfigError("actuator parameters must be positive");
    }
  }
  if (slip_schedule.empty()) throw ConfigError("slip schedule is empty");
  geom.validate();
  ocp.validate();
  mhe.validate();
  sensor.validate();
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig c;

  c.track.straight_len = kv.get_double("track.straight_len", c.track.straight_len);
  c.track.radius = kv.get_double("track.radius", c.track.radius);
  c.track.spacing = kv.get_double("track.spacing", c.track.spacing);
  c.track.straight_only_length = kv.get_double("track.straight_only", c.track.straight_only_length);
  c.track.start_station = kv.get_double("start.station", c.track.start_station);
  c.initial_speed = kv.get_double("start.v", c.initial_speed);

  c.geom.tractor_wheelbase = kv.get_double("geom.Lt", c.geom.tractor_wheelbase);
  c.geom.trailer_length = kv.get_double("geom.Li", c.geom.trailer_length);
  c.geom.drawbar_length = kv.get_double("geom.l", c.geom.drawbar_length);

  auto& o = c.ocp;
  o.N = static_cast<int>(kv.get_int("nmpc.N", o.N));
  o.dt = kv.get_double("nmpc.dt", o.dt);
  auto vec6 = [&](const std::string& key, StateVec& target) {
    const auto v = kv.get_vector(key, kStateDim, from_vec(target));
    for (int i = 0; i < kStateDim; ++i) target(i) = v[i];
  };
  vec6("nmpc.Q", o.Q);
  vec6("nmpc.S", o.S);
  const auto r = kv.get_vector("nmpc.R", 2, from_vec(o.R));
  o.R = ControlVec(r[0], r[1]);
  o.u_max = deg_pair(kv, "nmpc.u_max_deg", o.u_max);
  o.u_min = -o.u_max;
  c.lookahead = kv.get_double("nmpc.lookahead", c.lookahead);

  auto& m = c.mhe;
  m.M = static_cast<int>(kv.get_int("mhe.M", m.M));
  m.sigma_y(kChXt) = m.sigma_y(kChYt) = m.sigma_y(kChXi) = m.sigma_y(kChYi) =
      kv.get_double("mhe.sigma_pos", m.sigma_y(kChXt));
  m.sigma_y(kChBeta) = kv.get_double("mhe.sigma_beta", m.sigma_y(kChBeta));
  m.sigma_y(kChV) = kv.get_double("mhe.sigma_v", m.sigma_y(kChV));
  m.sigma_u.setConstant(kv.get_double("mhe.sigma_delta", m.sigma_u(0)));
  m.sigma_prior = to_est(kv.get_vector("mhe.sigma_prior", kEstDim, from_vec(m.sigma_prior)));
  m.sigma_process =
      to_est(kv.get_vector("mhe.sigma_process", kEstDim, from_vec(m.sigma_process)));
  m.slip_min = kv.get_double("mhe.slip_min", m.slip_min);
  m.slip_max = kv.get_double("mhe.slip_max", m.slip_max);

  auto& s = c.sensor;
  s.sigma_y(kChXt) = s.sigma_y(kChYt) = s.sigma_y(kChXi) = s.sigma_y(kChYi) =
      kv.get_double("sensor.sigma_pos", s.sigma_y(kChXt));
  s.sigma_y(kChBeta) = kv.get_double("sensor.sigma_beta", s.sigma_y(kChBeta));
  s.sigma_y(kChV) = kv.get_double("sensor.sigma_v", s.sigma_y(kChV));
  s.sigma_u.setConstant(kv.get_double("sensor.sigma_delta", s.sigma_u(0)));
  s.quantization = deg2rad(kv.get_double("sensor.quantization_deg", rad2deg(s.quantization)));
  s.dropout_probability = kv.get_double("sensor.dropout_prob", s.dropout_probability);
  s.seed = static_cast<std::uint64_t>(kv.get_int("run.seed", static_cast<long>(s.seed)));
  const std::string schedule = kv.get_string("sensor.dropout_schedule", "");
  if (!schedule.empty()) {
    s.scripted_dropouts = read_dropout_schedule(schedule, o.dt);
    s.dropout_probability = 0.0;
  }

  auto& p = c.plant;
  p.v_ref = kv.get_double("plant.v_ref", p.v_ref);
  p.speed_time_constant = kv.get_double("plant.speed_tau", p.speed_time_constant);
  p.substeps = static_cast<int>(kv.get_int("plant.substeps", p.substeps));
  p.ideal_actuators = kv.get_bool("plant.ideal_actuators", p.ideal_actuators);
  p.tractor_actuator.time_constant = kv.get_double("plant.tractor_tau", p.tractor_actuator.time_constant);
  p.tractor_actuator.rate_limit =
      deg2rad(kv.get_double("plant.tractor_rate_deg", rad2deg(p.tractor_actuator.rate_limit)));
  p.trailer_actuator.time_constant = kv.get_double("plant.trailer_tau", p.trailer_actuator.time_constant);
  p.trailer_actuator.rate_limit =
      deg2rad(kv.get_double("plant.trailer_rate_deg", rad2deg(p.trailer_actuator.rate_limit)));
  p.tractor_actuator.mechanical_limit = o.u_max(0);
  p.trailer_actuator.mechanical_limit = o.u_max(1);

  const std::string slip_file = kv.get_string("plant.slip_schedule", "");
  if (!slip_file.empty()) {
    c.slip_schedule = SlipSchedule::from_csv(slip_file);
  } else {
    const auto sl = kv.get_vector("plant.slip", 3, {0.9, 0.9, 0.9});
    c.slip_schedule = SlipSchedule(SlipParams{sl[0], sl[1], sl[2]});
  }

  c.duration_s = kv.get_double("run.duration", c.duration_s);
  c.transient_s = kv.get_double("run.transient", c.transient_s);
  c.output_dir = kv.get_string("run.out", c.output_dir);
  c.record_timing = kv.get_bool("run.record_timing", c.record_timing);
  c.parallel = kv.get_bool("run.parallel", c.parallel);

  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");

  c.finalize();
  c.validate();
  return c;
}

Path build_track(const TrackConfig& cfg) {
  if (cfg.straight_only_length > 0.0) {
    return Path::straight_line(0.0, 0.0, 0.0, cfg.straight_only_length, cfg.spacing);
  }
  return build_eight_track(cfg.straight_len, cfg.radius, cfg.spacing);
}

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed_ms(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

EstVec initial_estimate(const MeasSample& m) {
  const double yaw = std::atan2(m.y(kChYt) - m.y(kChYi), m.y(kChXt) - m.y(kChXi));
  EstVec z;
  z << m.y(kChXt), m.y(kChYt), yaw, m.y(kChXi), m.y(kChYi), yaw, 1.0, 1.0, 1.0, m.y(kChBeta),
      m.y(kChV);
  return z;
}

VehicleState est_pose(const EstVec& z) { return VehicleState::from_vec(z.head<kStateDim>()); }

ModelParams model_params(const EstVec& z, const VehicleGeometry& g) {
  return ModelParams{SlipParams{z(kEMu), z(kEKappa), z(kEEta)}, z(kEV), g};
}

}  // namespace

ExperimentResult simulate(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  cfg.validate();

  const Path path = build_track(cfg.track);
  const double dt = cfg.ocp.dt;
  const long cycles = std::lround(cfg.duration_s / dt);

  // tractor on the path, trailer aligned behind it
  const PathPoint start = path.at(cfg.track.start_station);
  const PathPoint start_i = path.at(cfg.track.start_station - cfg.geom.hitch_offset());
  VehicleState pose0;
  pose0.xt = start.x;
  pose0.yt = start.y;
  pose0.theta = start.heading;
  pose0.xi = start_i.x;
  pose0.yi = start_i.y;
  pose0.psi = start_i.heading;
  PlantState plant = make_plant_state(pose0, cfg.initial_speed, cfg.slip_schedule);

  std::mt19937_64 rng(cfg.sensor.seed);
  NmpcController nmpc(cfg.ocp);
  MovingHorizonEstimator mhe(cfg.mhe);
  const LookaheadConfig la{cfg.lookahead, cfg.ocp.N, dt};
  ProjectionCursor cursor;

  ExperimentResult res;
  res.log.reserve(cycles);
  bool started = false;

  for (long k = 0; k < cycles; ++k) {
    CycleRecord rec;
    rec.t = plant.t;
    rec.true_pose = plant.pose;
    rec.true_beta = plant.beta;
    rec.true_v = plant.v;
    rec.true_slip = plant.slip;

    const MeasSample meas = sense(plant, cfg.sensor, rng, k);
    rec.gps_masked = !meas.gps_available();

    if (!started) {
      mhe.initialize(initial_estimate(meas));
    }

    auto t0 = clock_type::now();
    mhe.add_sample(meas);
    const MheEstimate est = mhe.estimate();
    const double t_mhe_est = elapsed_ms(t0);
    const EstVec z_hat = est.z_hat.vec();
    rec.est = z_hat;
    if (est.stats.degraded) ++res.report.degraded_cycles;

    const ModelParams params = model_params(z_hat, cfg.geom);
    const StateVec x_hat = z_hat.head<kStateDim>();
    const ReferenceHorizon refs =
        lookahead_reference(path, est_pose(z_hat), params.v, meas.u, cfg.geom, la, &cursor);
    if (!started) {
      nmpc.initialize(x_hat, params);
      started = true;
    }
    const FeedbackResult fb = nmpc.feedback(x_hat, params, refs);
    rec.cmd = fb.u_apply;
    if (fb.stats.degraded) ++res.report.degraded_cycles;
    const double t_nmpc_fb = nmpc.last_timing().feedback_ms;

    plant = plant_step(plant, rec.cmd, dt, cfg.plant, cfg.slip_schedule);
    rec.act = plant.actuators;

    // preparation for the next cycle: references from the predicted state
    double t_mhe_prep = 0.0;
    auto prepare_nmpc = [&]() {
      ProjectionCursor pc = cursor;
      const VehicleState pred = VehicleState::from_vec(nmpc.predicted_state());
      const ReferenceHorizon next_refs =
          lookahead_reference(path, pred, params.v, meas.u, cfg.geom, la, &pc);
      nmpc.prepare(params, next_refs);
    };
    auto prepare_mhe = [&]() {
      const auto t1 = clock_type::now();
      mhe.prepare();
      t_mhe_prep = elapsed_ms(t1);
    };
    if (cfg.parallel) {
      auto job = std::async(std::launch::async, prepare_mhe);
      prepare_nmpc();
      job.get();
    } else {
      prepare_nmpc();
      prepare_mhe();
    }

    if (cfg.record_timing) {
      rec.t_nmpc_prep_ms = nmpc.last_timing().preparation_ms;
      rec.t_nmpc_fb_ms = t_nmpc_fb;
      rec.t_mhe_prep_ms = t_mhe_prep;
      rec.t_mhe_est_ms = t_mhe_est;
    }
    res.log.push_back(rec);
  }

  MetricsOptions opts;
  opts.transient_s = cfg.transient_s;
  opts.u_max = cfg.ocp.u_max;
  opts.slip_min = cfg.mhe.slip_min;
  opts.slip_max = cfg.mhe.slip_max;
  opts.actuator_limit =
      ControlVec(cfg.plant.tractor_actuator.mechanical_limit + cfg.plant.tractor_actuator.allowance,
                 cfg.plant.trailer_actuator.mechanical_limit + cfg.plant.trailer_actuator.allowance);
  const long degraded = res.report.degraded_cycles;
  res.report = compute_metrics(res.log, path, opts);
  res.report.degraded_cycles = degraded;

  if (!cfg.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    write_log_csv(res.log, (dir / "log.csv").string());
    path.write_csv((dir / "path.csv").string());
    std::ofstream txt(dir / "metrics.txt");
    if (!txt) throw IoError("cannot write " + (dir / "metrics.txt").string());
    print_report(res.report, txt);
    write_metrics_json(res.report, (dir / "metrics.json").string());
  }
  return res;
}

MetricsReport run_experiment(const ExperimentConfig& cfg) { return simulate(cfg).report; }

namespace {

struct Accum {
  double sum = 0.0, max = 0.0;
  long n = 0;
  void add(double e) {
    sum += e;
    max = std::max(max, e);
    ++n;
  }
  ErrorStats stats() const { return {n ? sum / n : 0.0, max, n}; }
};

struct TimeAccum {
  double min = std::numeric_limits<double>::infinity(), max = 0.0, sum = 0.0;
  long n = 0;
  void add(double t) {
    min = std::min(min, t);
    max = std::max(max, t);
    sum += t;
    ++n;
  }
  TimingStats stats() const {
    if (!n) return {};
    // clamp so rounding in the mean cannot break min <= avg <= max
    return {min, std::clamp(sum / n, min, max), max};
  }
};

}  // namespace

MetricsReport aggregate_metrics(const std::vector<CycleRecord>& log, const MetricsOptions& opts) {
  MetricsReport r;
  r.cycles = static_cast<long>(log.size());
  Accum ts, tc, is, ic;
  TimeAccum np, nf, no, mp, me, mo, all;
  const double tol = 1e-12;
  for (const auto& c : log) {
    if (c.gps_masked) ++r.dropout_count;
    if (c.t >= opts.transient_s - 1e-9) {
      if (c.seg_tag == SegmentTag::kStraight) {
        ts.add(c.err_tractor);
        is.add(c.err_trailer);
      } else {
        tc.add(c.err_tractor);
        ic.add(c.err_trailer);
      }
    }
    np.add(c.t_nmpc_prep_ms);
    nf.add(c.t_nmpc_fb_ms);
    no.add(c.t_nmpc_prep_ms + c.t_nmpc_fb_ms);
    mp.add(c.t_mhe_prep_ms);
    me.add(c.t_mhe_est_ms);
    mo.add(c.t_mhe_prep_ms + c.t_mhe_est_ms);
    all.add(c.t_nmpc_prep_ms + c.t_nmpc_fb_ms + c.t_mhe_prep_ms + c.t_mhe_est_ms);

    const ControlVec u = c.cmd.vec();
    if ((u.array().abs() > opts.u_max.array() + tol).any() || !u.allFinite()) {
      ++r.control_violations;
    }
    for (int i = kEMu; i <= kEEta; ++i) {
      const double s = c.est(i);
      if (!(s >= opts.slip_min - tol && s <= opts.slip_max + tol)) {
        ++r.slip_violations;
        break;
      }
    }
    const ControlVec a = c.act.vec();
    if ((a.array().abs() > opts.actuator_limit.array() + tol).any()) ++r.actuator_violations;
  }
  r.tractor_straight = ts.stats();
  r.tractor_curve = tc.stats();
  r.trailer_straight = is.stats();
  r.trailer_curve = ic.stats();
  r.nmpc_prep = np.stats();
  r.nmpc_feedback = nf.stats();
  r.nmpc_overall = no.stats();
  r.mhe_prep = mp.stats();
  r.mhe_estimation = me.stats();
  r.mhe_overall = mo.stats();
  r.combined = all.stats();
  return r;
}

MetricsReport compute_metrics(std::vector<CycleRecord>& log, const Path& path,
                              const MetricsOptions& opts) {
  if (log.empty()) throw ConfigError("compute_metrics needs a non-empty log");
  ProjectionCursor ct, ci;
  for (auto& c : log) {
    const Projection pt = project(path, {c.true_pose.xt, c.true_pose.yt}, &ct);
    const Projection pi = project(path, {c.true_pose.xi, c.true_pose.yi}, &ci);
    const PathPoint on_t = path.at(pt.s);
    const PathPoint on_i = path.at(pi.s);
    c.err_tractor = std::hypot(c.true_pose.xt - on_t.x, c.true_pose.yt - on_t.y);
    c.err_trailer = std::hypot(c.true_pose.xi - on_i.x, c.true_pose.yi - on_i.y);
    c.seg_tag = on_t.tag;
  }
  return aggregate_metrics(log, opts);
}

const std::vector<std::string>& log_columns() {
  static const std::vector<std::string> cols = {
      "t",          "true_xt",     "true_yt",     "true_theta",  "true_xi",     "true_yi",
      "true_psi",   "true_beta",   "true_v",      "true_mu",     "true_kappa",  "true_eta",
      "est_xt",     "est_yt",      "est_theta",   "est_xi",      "est_yi",      "est_psi",
      "est_mu",     "est_kappa",   "est_eta",     "est_beta",    "est_v",       "cmd_delta_t",
      "cmd_delta_i", "act_delta_t", "act_delta_i", "gps_masked",  "err_tractor", "err_trailer",
      "seg_tag",    "t_nmpc_prep_ms", "t_nmpc_fb_ms", "t_mhe_prep_ms", "t_mhe_est_ms"};
  return cols;
}

void write_log_csv(const std::vector<CycleRecord>& log, std::ostream& out) {
  const auto& cols = log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  for (const auto& c : log) {
    std::snprintf(buf, sizeof buf, "%.17g", c.t);
    out << buf;
    for (int i = 0; i < kStateDim; ++i) num(c.true_pose.vec()(i));
    num(c.true_beta);
    num(c.true_v);
    num(c.true_slip.mu);
    num(c.true_slip.kappa);
    num(c.true_slip.eta);
    for (int i = 0; i < kEstDim; ++i) num(c.est(i));
    num(c.cmd.delta_t);
    num(c.cmd.delta_i);
    num(c.act.delta_t);
    num(c.act.delta_i);
    out << ',' << (c.gps_masked ? 1 : 0);
    num(c.err_tractor);
    num(c.err_trailer);
    out << ',' << to_string(c.seg_tag);
    num(c.t_nmpc_prep_ms);
    num(c.t_nmpc_fb_ms);
    num(c.t_mhe_prep_ms);
    num(c.t_mhe_est_ms);
    out << '\n';
  }
}

void write_log_csv(const std::vector<CycleRecord>& log, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file);
  write_log_csv(log, out);
  if (!out) throw IoError("write failed for " + file);
}

std::vector<CycleRecord> read_log_csv(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file);
  const auto& cols = log_columns();
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(file + ": empty log");
  {
    std::vector<std::string> header;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
    if (header != cols) throw ConfigError(file + ": unexpected log header");
  }
  std::vector<CycleRecord> log;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != cols.size()) {
      throw ConfigError(file + ":" + std::to_string(lineno) + ": wrong column count");
    }
    std::size_t i = 0;
    auto next = [&]() {
      try {
        return std::stod(cells[i++]);
      } catch (const std::exception&) {
        throw ConfigError(file + ":" + std::to_string(lineno) + ": malformed number");
      }
    };
    CycleRecord c;
    c.t = next();
    StateVec p;
    for (int j = 0; j < kStateDim; ++j) p(j) = next();
    c.true_pose = VehicleState::from_vec(p);
    c.true_beta = next();
    c.true_v = next();
    c.true_slip.mu = next();
    c.true_slip.kappa = next();
    c.true_slip.eta = next();
    for (int j = 0; j < kEstDim; ++j) c.est(j) = next();
    c.cmd.delta_t = next();
    c.cmd.delta_i = next();
    c.act.delta_t = next();
    c.act.delta_i = next();
    c.gps_masked = next() != 0.0;
    c.err_tractor = next();
    c.err_trailer = next();
    const std::string& tag = cells[i++];
    if (tag == to_string(SegmentTag::kStraight)) c.seg_tag = SegmentTag::kStraight;
    else if (tag == to_string(SegmentTag::kCurve)) c.seg_tag = SegmentTag::kCurve;
    else throw ConfigError(file + ":" + std::to_string(lineno) + ": unknown segment tag");
    c.t_nmpc_prep_ms = next();
    c.t_nmpc_fb_ms = next();
    c.t_mhe_prep_ms = next();
    c.t_mhe_est_ms = next();
    log.push_back(c);
  }
  return log;
}

void print_report(const MetricsReport& r, std::ostream& out) {
  char buf[160];
  auto line = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out << buf << '\n';
  };
  line("cycles                 %ld", r.cycles);
  line("dropouts               %ld", r.dropout_count);
  out << "euclidean error [m]        mean      max   samples\n";
  auto err = [&](const char* name, const ErrorStats& e) {
    line("  %-22s %8.4f %8.4f %8ld", name, e.mean, e.max, e.count);
  };
  err("tractor straight", r.tractor_straight);
  err("tractor curve", r.tractor_curve);
  err("trailer straight", r.trailer_straight);
  err("trailer curve", r.trailer_curve);
  out << "execution time [ms]         min      avg      max\n";
  auto tim = [&](const char* name, const TimingStats& t) {
    line("  %-22s %8.3f %8.3f %8.3f", name, t.min, t.avg, t.max);
  };
  tim("nmpc preparation", r.nmpc_prep);
  tim("nmpc feedback", r.nmpc_feedback);
  tim("nmpc overall", r.nmpc_overall);
  tim("nmhe preparation", r.mhe_prep);
  tim("nmhe estimation", r.mhe_estimation);
  tim("nmhe overall", r.mhe_overall);
  tim("combined", r.combined);
  line("control violations     %ld", r.control_violations);
  line("slip violations        %ld", r.slip_violations);
  line("actuator violations    %ld", r.actuator_violations);
  line("degraded solves        %ld", r.degraded_cycles);
}

namespace {

nlohmann::json report_json(const MetricsReport& r) {
  auto e = [](const ErrorStats& s) {
    return nlohmann::json{{"mean", s.mean}, {"max", s.max}, {"count", s.count}};
  };
  auto t = [](const TimingStats& s) {
    return nlohmann::json{{"min", s.min}, {"avg", s.avg}, {"max", s.max}};
  };
  return {{"cycles", r.cycles},
          {"dropout_count", r.dropout_count},
          {"error",
           {{"tractor_straight", e(r.tractor_straight)},
            {"tractor_curve", e(r.tractor_curve)},
            {"trailer_straight", e(r.trailer_straight)},
            {"trailer_curve", e(r.trailer_curve)}}},
          {"timing_ms",
           {{"nmpc_preparation", t(r.nmpc_prep)},
            {"nmpc_feedback", t(r.nmpc_feedback)},
            {"nmpc_overall", t(r.nmpc_overall)},
            {"nmhe_preparation", t(r.mhe_prep)},
            {"nmhe_estimation", t(r.mhe_estimation)},
            {"nmhe_overall", t(r.mhe_overall)},
            {"combined", t(r.combined)}}},
          {"violations",
           {{"control", r.control_violations},
            {"slip", r.slip_violations},
            {"actuator", r.actuator_violations}}},
          {"degraded_cycles", r.degraded_cycles}};
}

}  // namespace

void write_metrics_json(const MetricsReport& r, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file);
  out << report_json(r).dump(2) << '\n';
}

}  // namespace tnmpc
