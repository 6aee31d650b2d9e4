#pragma once

/**
 * @file
 * @brief Tracking NMPC solved with one real-time Gauss-Newton iteration per sample.
 *
 * The OCP is transcribed with multiple shooting on the RK4 grid and condensed
 * into a dense box QP in the control increments. Each sampling instant is
 * split into
 *  - `prepare`: linearize along the warm start (whose node 0 is the predicted
 *    state) and condense; the initial-state constraint is left open;
 *  - `feedback`: embed the fresh state estimate and the latest references
 *    into the condensed gradient, solve the QP and roll the new controls out.
 *
 * Cost, summed over the shooting grid:
 *   sum_{k<N} |x_r,k - x_k|^2_Q + |u_r,k - u_k|^2_R  +  |x_r,N - x_N|^2_S
 */

#include "tnmpc/box_qp.hpp"
#include "tnmpc/reference_path.hpp"
#include "tnmpc/vehicle_model.hpp"

#include <vector>

namespace tnmpc {

struct OcpConfig {
  int N = 15;
  double dt = 0.2;
  StateVec Q = (StateVec() << 0.5, 0.5, 0.0, 0.005, 0.005, 0.0).finished();
  ControlVec R = ControlVec(5.0, 0.05);
  StateVec S = (StateVec() << 5.0, 5.0, 0.0, 0.05, 0.05, 0.0).finished();
  ControlVec u_max = ControlVec(deg2rad(35.0), deg2rad(25.0));
  ControlVec u_min = -ControlVec(deg2rad(35.0), deg2rad(25.0));
  VehicleGeometry geom;

  void validate() const;
};

struct ShootingTrajectory {
  std::vector<StateVec> states;      ///< N+1 nodes
  std::vector<ControlVec> controls;  ///< N intervals

  int horizon() const { return static_cast<int>(controls.size()); }
};

/// Rollout of `controls` from `x0` through rk4_step.
std::vector<StateVec> rollout(const StateVec& x0, const std::vector<ControlVec>& controls,
                              const ModelParams& params, double dt);

/// Zero-control rollout from `x0`, used before the first sample.
ShootingTrajectory initial_trajectory(const StateVec& x0, const ModelParams& params,
                                      const OcpConfig& cfg);

/// Drops node 0 and appends a copy of the last control with its rollout.
ShootingTrajectory shift(const ShootingTrajectory& traj, const ModelParams& params, double dt);

/// Objective value of `traj` against `refs`.
double ocp_cost(const ShootingTrajectory& traj, const ReferenceHorizon& refs,
                const OcpConfig& cfg);

struct PreparedQP {
  DenseBoxQP qp;               ///< gradient built with zero initial-state deviation
  Eigen::MatrixXd init_gain;   ///< d(gradient) / d(x_hat - traj.states[0])
  Eigen::MatrixXd state_gain;  ///< Gamma' W: maps stacked state residuals to the gradient
  ShootingTrajectory traj;     ///< linearization point
  ReferenceHorizon refs;       ///< references built into qp.g
  ModelParams params;
  std::vector<ModelJacobians> jacobians;
  std::vector<StateVec> defects;  ///< rk4_step(s_k, u_k) - s_{k+1}
  bool consumed = false;
};

/// Linearize along `traj` and condense (no initial-value embedding yet).
PreparedQP prepare(const ShootingTrajectory& traj, const ModelParams& params,
                   const ReferenceHorizon& refs, const OcpConfig& cfg);

struct FeedbackStats {
  double kkt_residual = 0.0;  ///< of the condensed QP
  int qp_iterations = 0;
  bool regularized = false;
  bool degraded = false;  ///< QP hit its iteration limit; previous plan's first control applied
};

struct FeedbackResult {
  Control u_apply;                 ///< first control, clamped to the input bounds
  ShootingTrajectory solution;     ///< updated plan rolled out from x_hat
  ShootingTrajectory warm_start;   ///< shift(solution), for the next sample
  FeedbackStats stats;
};

/// Embed `x_hat` and `refs`, solve the condensed QP (warm-started from the
/// previous active set when given) and update the controls.
FeedbackResult feedback(PreparedQP& prep, const StateVec& x_hat, const ReferenceHorizon& refs,
                        const OcpConfig& cfg, const QPWarmStart* warm = nullptr);

/// Projected-gradient norm of the reduced (single-shooting) OCP at the controls
/// of `traj`, states rolled out from `x_hat`. The gradient is exact: the
/// Gauss-Newton model only approximates the Hessian.
double ocp_kkt_residual(const ShootingTrajectory& traj, const StateVec& x_hat,
                        const ModelParams& params, const ReferenceHorizon& refs,
                        const OcpConfig& cfg);

struct NmpcTiming {
  double preparation_ms = 0.0;
  double feedback_ms = 0.0;
};

/// Owns the warm start and the pending prepared QP across sampling instants.
class NmpcController {
 public:
  explicit NmpcController(OcpConfig cfg);

  void initialize(const StateVec& x0, const ModelParams& params);
  bool initialized() const { return !warm_.states.empty(); }

  /// Preparation phase for the next sample.
  void prepare(const ModelParams& params, const ReferenceHorizon& refs);
  /// Feedback phase; prepares on the spot if no prepared QP is pending.
  FeedbackResult feedback(const StateVec& x_hat, const ModelParams& params,
                          const ReferenceHorizon& refs);

  /// Predicted state at the next sample (node 0 of the warm start).
  const StateVec& predicted_state() const { return warm_.states.front(); }
  const ShootingTrajectory& warm_start() const { return warm_; }
  const OcpConfig& config() const { return cfg_; }
  const NmpcTiming& last_timing() const { return timing_; }

 private:
  OcpConfig cfg_;
  ShootingTrajectory warm_;
  PreparedQP prep_;
  bool prepared_ = false;
  QPWarmStart qp_warm_;
  Control last_applied_;
  NmpcTiming timing_;
};

}  // namespace tnmpc
