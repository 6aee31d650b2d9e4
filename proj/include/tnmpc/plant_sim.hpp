#pragma once

#include "tnmpc/nmhe.hpp"
#include "tnmpc/vehicle_model.hpp"

#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace tnmpc {

/// First-order lag toward `command` over `dt`, slew-limited to `rate_limit`,
/// then clamped to +-`limit`.
double actuator_step(double current, double command, double dt, double rate_limit,
                     double time_constant,
                     double limit = std::numeric_limits<double>::infinity());

struct ActuatorConfig {
  double time_constant = 0.15;  ///< [s]
  double rate_limit = deg2rad(30.0);
  double mechanical_limit = deg2rad(35.0);
  double allowance = deg2rad(1.0);  ///< transient overshoot tolerated past the limit
};

/// Piecewise-constant true slip over time.
class SlipSchedule {
 public:
  SlipSchedule() = default;
  explicit SlipSchedule(SlipParams constant) { steps_.push_back({0.0, constant}); }
  void add(double t_start, SlipParams slip);
  SlipParams at(double t) const;
  bool empty() const { return steps_.empty(); }

  /// CSV with header `t_start_s,mu,kappa,eta`.
  static SlipSchedule from_csv(const std::string& file);

 private:
  struct Step {
    double t_start;
    SlipParams slip;
  };
  std::vector<Step> steps_;
};

struct PlantConfig {
  VehicleGeometry geom;
  ActuatorConfig tractor_actuator{0.15, deg2rad(30.0), deg2rad(35.0), deg2rad(1.0)};
  ActuatorConfig trailer_actuator{0.4, deg2rad(15.0), deg2rad(25.0), deg2rad(1.0)};
  bool ideal_actuators = false;  ///< actuators follow commands instantly
  double v_ref = 1.0;             ///< [m/s]
  double speed_time_constant = 0.5;
  int substeps = 10;
};

struct PlantState {
  double t = 0.0;
  VehicleState pose;
  double beta = 0.0;  ///< integrated hitch angle
  Control actuators;  ///< current steering angles
  SlipParams slip;
  double v = 1.0;
};

/// Plant at rest on a pose with consistent hitch angle.
PlantState make_plant_state(const VehicleState& pose, double v, const SlipSchedule& schedule);

/// Advances actuators and kinematics over `dt` in `cfg.substeps` RK4 substeps.
/// The hitch angle integrates beta' = theta' - psi' - delta_i'.
PlantState plant_step(const PlantState& ps, const Control& command, double dt,
                      const PlantConfig& cfg, const SlipSchedule& schedule);

struct SensorConfig {
  MeasVec sigma_y = (MeasVec() << 0.03, 0.03, 0.03, 0.03, 0.0175, 0.1).finished();
  ControlVec sigma_u = ControlVec(0.0175, 0.0175);
  double quantization = deg2rad(1.0);      ///< steering and hitch resolution, 0 disables
  double dropout_probability = 11.0 / 871.0;
  std::set<long> scripted_dropouts;        ///< cycle indices with GPS forced out
  std::uint64_t seed = 1;

  void validate() const;
};

/// Reads a dropout schedule CSV (header `t_s`, one masked sample time per row)
/// and returns the cycle indices for period `dt`.
std::set<long> read_dropout_schedule(const std::string& file, double dt);

/// Noisy, quantized measurement of `ps`. Draws a fixed number of variates per
/// call so the random stream is independent of masking.
MeasSample sense(const PlantState& ps, const SensorConfig& cfg, std::mt19937_64& rng,
                 long cycle = -1);

}  // namespace tnmpc
