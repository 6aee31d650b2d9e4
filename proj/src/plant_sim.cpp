#include "tnmpc/plant_sim.hpp"

#include "tnmpc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tnmpc {

double actuator_step(double current, double command, double dt, double rate_limit,
                     double time_constant, double limit) {
  double delta = (command - current) * (1.0 - std::exp(-dt / time_constant));
  const double max_step = rate_limit * dt;
  delta = std::clamp(delta, -max_step, max_step);
  return std::clamp(current + delta, -limit, limit);
}

void SlipSchedule::add(double t_start, SlipParams slip) {
  if (!steps_.empty() && t_start <= steps_.back().t_start) {
    throw ConfigError("slip schedule times must be strictly increasing");
  }
  steps_.push_back({t_start, slip});
}

SlipParams SlipSchedule::at(double t) const {
  if (steps_.empty()) return {};
  SlipParams s = steps_.front().slip;
  for (const auto& st : steps_) {
    if (st.t_start <= t + 1e-12) s = st.slip;
    else break;
  }
  return s;
}

namespace {

std::vector<std::vector<double>> read_numeric_csv(const std::string& file,
                                                  std::size_t columns) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(file + ": malformed number '" + cell + "'");
      }
    }
    if (row.size() != columns) {
      throw ConfigError(file + ": expected " + std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

SlipSchedule SlipSchedule::from_csv(const std::string& file) {
  SlipSchedule s;
  for (const auto& r : read_numeric_csv(file, 4)) s.add(r[0], {r[1], r[2], r[3]});
  if (s.empty()) throw ConfigError(file + ": empty slip schedule");
  return s;
}

PlantState make_plant_state(const VehicleState& pose, double v, const SlipSchedule& schedule) {
  PlantState ps;
  ps.pose = pose;
  ps.beta = hitch_closure(pose.theta, pose.psi, 0.0);
  ps.v = v;
  ps.slip = schedule.at(0.0);
  return ps;
}

namespace {

using PlantVec = Eigen::Matrix<double, 7, 1>;  // pose + beta

PlantVec plant_rhs(const PlantVec& x, const Control& act, const SlipParams& slip, double v,
                   const VehicleGeometry& g) {
  const double a = slip.mu * v;
  const double tk = std::tan(slip.kappa * act.delta_t);
  const double arg = slip.eta * act.delta_i + x(6);
  PlantVec d;
  d(kXt) = a * std::cos(x(kTheta));
  d(kYt) = a * std::sin(x(kTheta));
  d(kTheta) = a * tk / g.tractor_wheelbase;
  d(kXi) = a * std::cos(x(kPsi));
  d(kYi) = a * std::sin(x(kPsi));
  d(kPsi) = a / g.trailer_length *
            (std::sin(arg) + g.drawbar_length / g.tractor_wheelbase * tk * std::cos(arg));
  d(6) = d(kTheta) - d(kPsi);
  return d;
}

}  // namespace

PlantState plant_step(const PlantState& ps, const Control& command, double dt,
                      const PlantConfig& cfg, const SlipSchedule& schedule) {
  if (!(dt > 0.0)) throw ConfigError("plant step needs dt > 0");
  const int n = std::max(1, cfg.substeps);
  const double h = dt / n;
  const auto& ta = cfg.tractor_actuator;
  const auto& ia = cfg.trailer_actuator;

  PlantState out = ps;
  PlantVec x;
  x << ps.pose.vec(), ps.beta;
  for (int i = 0; i < n; ++i) {
    out.slip = schedule.empty() ? ps.slip : schedule.at(out.t);
    Control act = out.actuators;
    if (cfg.ideal_actuators) {
      act = command;
    } else {
      act.delta_t = actuator_step(act.delta_t, command.delta_t, h, ta.rate_limit,
                                  ta.time_constant, ta.mechanical_limit + ta.allowance);
      act.delta_i = actuator_step(act.delta_i, command.delta_i, h, ia.rate_limit,
                                  ia.time_constant, ia.mechanical_limit + ia.allowance);
    }
    // passive joint: moving the trailer steering rotates the drawbar
    x(6) -= act.delta_i - out.actuators.delta_i;
    out.actuators = act;

    const double v = out.v;
    auto rhs = [&](const PlantVec& s) { return plant_rhs(s, act, out.slip, v, cfg.geom); };
    const PlantVec k1 = rhs(x);
    const PlantVec k2 = rhs(x + 0.5 * h * k1);
    const PlantVec k3 = rhs(x + 0.5 * h * k2);
    const PlantVec k4 = rhs(x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    out.v += (cfg.v_ref - out.v) * (1.0 - std::exp(-h / cfg.speed_time_constant));
    out.t += h;
  }
  out.t = ps.t + dt;
  out.pose = VehicleState::from_vec(x.head<kStateDim>());
  out.beta = x(6);
  return out;
}

void SensorConfig::validate() const {
  if ((sigma_y.array() < 0.0).any() || (sigma_u.array() < 0.0).any()) {
    throw ConfigError("sensor noise levels must be non-negative");
  }
  if (!(dropout_probability >= 0.0 && dropout_probability <= 1.0)) {
    throw ConfigError("sensor dropout probability must be in [0, 1]");
  }
  if (quantization < 0.0) throw ConfigError("sensor quantization must be non-negative");
}

std::set<long> read_dropout_schedule(const std::string& file, double dt) {
  std::set<long> cycles;
  for (const auto& r : read_numeric_csv(file, 1)) cycles.insert(std::lround(r[0] / dt));
  return cycles;
}

MeasSample sense(const PlantState& ps, const SensorConfig& cfg, std::mt19937_64& rng,
                 long cycle) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto quantize = [&](double x) {
    return cfg.quantization > 0.0 ? cfg.quantization * std::round(x / cfg.quantization) : x;
  };

  MeasSample m;
  m.t = ps.t;
  const double truth[kMeasDim] = {ps.pose.xt, ps.pose.yt, ps.pose.xi, ps.pose.yi, ps.beta, ps.v};
  for (int c = 0; c < kMeasDim; ++c) m.y(c) = truth[c] + cfg.sigma_y(c) * gauss(rng);
  m.y(kChBeta) = quantize(m.y(kChBeta));
  m.u.delta_t = quantize(ps.actuators.delta_t + cfg.sigma_u(0) * gauss(rng));
  m.u.delta_i = quantize(ps.actuators.delta_i + cfg.sigma_u(1) * gauss(rng));

  const bool random_drop = unif(rng) < cfg.dropout_probability;
  const bool scripted = cycle >= 0 && cfg.scripted_dropouts.count(cycle) > 0;
  m.mask = kMaskAll;
  if (random_drop || scripted) m.mask &= static_cast<std::uint8_t>(~kMaskGps);
  return m;
}

}  // namespace tnmpc
