#pragma once

/**
 * @file
 * @brief Kinematic tractor-trailer model with slip coefficients.
 *
 * Two state layouts share the same equations of motion:
 *  - the 6-state control model (tractor pose, trailer pose) where the hitch
 *    angle is closed kinematically from the yaw angles and trailer steering;
 *  - the 11-state estimation model which additionally carries the slip
 *    coefficients, the hitch angle and the longitudinal speed as constant
 *    (random-walk) states.
 *
 * Both are discretized with a classical RK4 step under zero-order-hold
 * controls. Sensitivities of the discrete map are propagated through the RK4
 * stages, so they are the exact derivatives of `rk4_step`.
 */

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace tnmpc {

inline constexpr int kStateDim = 6;
inline constexpr int kControlDim = 2;
inline constexpr int kEstDim = 11;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using ControlVec = Eigen::Matrix<double, kControlDim, 1>;
using EstVec = Eigen::Matrix<double, kEstDim, 1>;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct VehicleGeometry {
  double tractor_wheelbase = 1.4;  ///< Lt, front to rear axle [m]
  double trailer_length = 1.3;     ///< Li, RJ2 to trailer axle [m]
  double drawbar_length = 1.1;     ///< l, RJ1 to RJ2 [m]

  /// Throws ConfigError unless all lengths are strictly positive.
  void validate() const;
  double hitch_offset() const { return drawbar_length + trailer_length; }
};

/// Index layout of the 6-state control model.
enum StateIndex : int { kXt = 0, kYt, kTheta, kXi, kYi, kPsi };

struct VehicleState {
  double xt = 0.0, yt = 0.0, theta = 0.0;
  double xi = 0.0, yi = 0.0, psi = 0.0;

  StateVec vec() const;
  static VehicleState from_vec(const StateVec& s);
};

struct Control {
  double delta_t = 0.0;  ///< tractor front steering [rad]
  double delta_i = 0.0;  ///< trailer steering at RJ2 [rad]

  ControlVec vec() const { return {delta_t, delta_i}; }
  static Control from_vec(const ControlVec& u) { return {u(0), u(1)}; }
};

struct SlipParams {
  double mu = 1.0;     ///< wheel slip
  double kappa = 1.0;  ///< tractor side slip
  double eta = 1.0;    ///< trailer side slip
};

/// Index layout of the 11-state estimation model.
enum EstIndex : int {
  kEXt = 0, kEYt, kETheta, kEXi, kEYi, kEPsi,
  kEMu, kEKappa, kEEta, kEBeta, kEV
};

struct EstState {
  VehicleState pose;
  SlipParams slip;
  double beta = 0.0;  ///< hitch angle at RJ1 [rad]
  double v = 0.0;     ///< longitudinal speed [m/s]

  EstVec vec() const;
  static EstState from_vec(const EstVec& z);
};

template <int N>
struct StepJacobians {
  Eigen::Matrix<double, N, N> d_state;
  Eigen::Matrix<double, N, kControlDim> d_control;
};

using ModelJacobians = StepJacobians<kStateDim>;
using EstJacobians = StepJacobians<kEstDim>;

/// Hitch angle closure: beta = theta - psi - delta_i.
constexpr double hitch_closure(double theta, double psi, double delta_i) {
  return theta - psi - delta_i;
}

/// Inverse of hitch_closure for the trailer yaw.
constexpr double trailer_yaw_from_hitch(double theta, double beta, double delta_i) {
  return theta - beta - delta_i;
}

/// Control-model parameters held constant over a step.
struct ModelParams {
  SlipParams slip;
  double v = 1.0;
  VehicleGeometry geom;
};

/// Continuous-time right-hand side of the 6-state model.
StateVec dynamics(const StateVec& s, const ControlVec& u, const ModelParams& p);
VehicleState dynamics(const VehicleState& s, const Control& u, const SlipParams& slip,
                      double v, const VehicleGeometry& geom);

/// Evolution of the hitch-angle entry of the estimation model.
enum class HitchModel {
  kRandomWalk,  ///< beta' = 0
  kKinematic,   ///< beta' = theta' - psi' between steering changes
};

/// Continuous-time right-hand side of the 11-state estimation model. Slips and
/// speed are constant; beta follows `hitch`.
EstVec est_dynamics(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom,
                    HitchModel hitch = HitchModel::kRandomWalk);

StateVec rk4_step(const StateVec& s, const ControlVec& u, const ModelParams& p, double dt);
EstVec rk4_step(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom, double dt,
                HitchModel hitch = HitchModel::kRandomWalk);

/// Exact sensitivities of rk4_step, propagated through the RK4 stages.
ModelJacobians step_jacobians(const StateVec& s, const ControlVec& u, const ModelParams& p,
                              double dt, StateVec* next = nullptr);
EstJacobians step_jacobians(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom,
                            double dt, EstVec* next = nullptr,
                            HitchModel hitch = HitchModel::kRandomWalk);

/// Forward finite-difference sensitivities of rk4_step (perturbation `h` per coordinate).
ModelJacobians step_jacobians_fd(const StateVec& s, const ControlVec& u, const ModelParams& p,
                                 double dt, double h = 1e-6);
EstJacobians step_jacobians_fd(const EstVec& z, const ControlVec& u,
                               const VehicleGeometry& geom, double dt, double h = 1e-6,
                               HitchModel hitch = HitchModel::kRandomWalk);

}  // namespace tnmpc
