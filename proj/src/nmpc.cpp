#include "tnmpc/nmpc.hpp"

#include "tnmpc/errors.hpp"

#include <chrono>

namespace tnmpc {

void OcpConfig::validate() const {
  if (N < 1) throw ConfigError("nmpc.N must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("nmpc.dt must be positive");
  if ((Q.array() < 0.0).any() || (R.array() < 0.0).any() || (S.array() < 0.0).any()) {
    throw ConfigError("nmpc weights must be non-negative");
  }
  if ((u_min.array() > u_max.array()).any()) throw ConfigError("nmpc input bounds crossed");
  geom.validate();
}

std::vector<StateVec> rollout(const StateVec& x0, const std::vector<ControlVec>& controls,
                              const ModelParams& params, double dt) {
  std::vector<StateVec> xs;
  xs.reserve(controls.size() + 1);
  xs.push_back(x0);
  for (const auto& u : controls) xs.push_back(rk4_step(xs.back(), u, params, dt));
  return xs;
}

ShootingTrajectory initial_trajectory(const StateVec& x0, const ModelParams& params,
                                      const OcpConfig& cfg) {
  ShootingTrajectory t;
  t.controls.assign(cfg.N, ControlVec::Zero());
  t.states = rollout(x0, t.controls, params, cfg.dt);
  return t;
}

ShootingTrajectory shift(const ShootingTrajectory& traj, const ModelParams& params, double dt) {
  ShootingTrajectory out;
  if (traj.controls.empty()) return traj;
  out.states.assign(traj.states.begin() + 1, traj.states.end());
  out.controls.assign(traj.controls.begin() + 1, traj.controls.end());
  out.controls.push_back(traj.controls.back());
  out.states.push_back(rk4_step(out.states.back(), out.controls.back(), params, dt));
  return out;
}

namespace {

void check_shapes(const ShootingTrajectory& traj, const ReferenceHorizon& refs,
                  const OcpConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.N);
  if (traj.controls.size() != n || traj.states.size() != n + 1 || refs.states.size() != n + 1 ||
      refs.inputs.size() != n) {
    throw ConfigError("trajectory/reference shapes do not match the horizon");
  }
}

const StateVec& stage_weight(const OcpConfig& cfg, int k) { return k == cfg.N ? cfg.S : cfg.Q; }

}  // namespace

double ocp_cost(const ShootingTrajectory& traj, const ReferenceHorizon& refs,
                const OcpConfig& cfg) {
  check_shapes(traj, refs, cfg);
  double cost = 0.0;
  for (int k = 0; k <= cfg.N; ++k) {
    const StateVec e = refs.states[k] - traj.states[k];
    cost += e.dot(stage_weight(cfg, k).cwiseProduct(e));
  }
  for (int k = 0; k < cfg.N; ++k) {
    const ControlVec e = refs.inputs[k] - traj.controls[k];
    cost += e.dot(cfg.R.cwiseProduct(e));
  }
  return cost;
}

PreparedQP prepare(const ShootingTrajectory& traj, const ModelParams& params,
                   const ReferenceHorizon& refs, const OcpConfig& cfg) {
  check_shapes(traj, refs, cfg);
  const int N = cfg.N;
  const int nx = kStateDim, nu = kControlDim;
  const int nv = nu * N;

  PreparedQP prep;
  prep.traj = traj;
  prep.refs = refs;
  prep.params = params;
  prep.jacobians.resize(N);
  prep.defects.resize(N);
  for (int k = 0; k < N; ++k) {
    StateVec next;
    prep.jacobians[k] = step_jacobians(traj.states[k], traj.controls[k], params, cfg.dt, &next);
    prep.defects[k] = next - traj.states[k + 1];
  }

  // dx_k = Phi_k dx_0 + Gamma_k du + c_k
  Eigen::MatrixXd Phi(nx * (N + 1), nx);
  Eigen::MatrixXd Gamma = Eigen::MatrixXd::Zero(nx * (N + 1), nv);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(nx * (N + 1));
  Phi.topRows(nx).setIdentity();
  for (int k = 0; k < N; ++k) {
    const auto& A = prep.jacobians[k].d_state;
    const auto& B = prep.jacobians[k].d_control;
    Phi.middleRows(nx * (k + 1), nx) = A * Phi.middleRows(nx * k, nx);
    Gamma.block(nx * (k + 1), 0, nx, nu * k) = A * Gamma.block(nx * k, 0, nx, nu * k);
    Gamma.block(nx * (k + 1), nu * k, nx, nu) = B;
    c.segment(nx * (k + 1), nx) = A * c.segment(nx * k, nx) + prep.defects[k];
  }

  Eigen::VectorXd w(nx * (N + 1));
  Eigen::VectorXd state_res(nx * (N + 1));
  for (int k = 0; k <= N; ++k) {
    w.segment(nx * k, nx) = stage_weight(cfg, k);
    state_res.segment(nx * k, nx) = traj.states[k] - refs.states[k];
  }
  state_res += c;

  prep.state_gain = Gamma.transpose() * w.asDiagonal();
  prep.init_gain = prep.state_gain * Phi;

  auto& qp = prep.qp;
  qp.H = prep.state_gain * Gamma;
  qp.g = prep.state_gain * state_res;
  qp.lb.resize(nv);
  qp.ub.resize(nv);
  for (int k = 0; k < N; ++k) {
    qp.H.diagonal().segment(nu * k, nu) += cfg.R;
    qp.g.segment(nu * k, nu) += cfg.R.cwiseProduct(traj.controls[k] - refs.inputs[k]);
    qp.lb.segment(nu * k, nu) = cfg.u_min - traj.controls[k];
    qp.ub.segment(nu * k, nu) = cfg.u_max - traj.controls[k];
  }
  // symmetrize against round-off in the triple product
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  return prep;
}

FeedbackResult feedback(PreparedQP& prep, const StateVec& x_hat, const ReferenceHorizon& refs,
                        const OcpConfig& cfg, const QPWarmStart* warm) {
  if (prep.consumed) throw ConfigError("prepared QP already consumed");
  check_shapes(prep.traj, refs, cfg);
  prep.consumed = true;
  const int N = cfg.N;
  const int nx = kStateDim, nu = kControlDim;

  DenseBoxQP qp = prep.qp;
  qp.g += prep.init_gain * (x_hat - prep.traj.states[0]);
  // references enter the gradient linearly
  Eigen::VectorXd dref(nx * (N + 1));
  for (int k = 0; k <= N; ++k) dref.segment(nx * k, nx) = refs.states[k] - prep.refs.states[k];
  qp.g -= prep.state_gain * dref;
  for (int k = 0; k < N; ++k) {
    qp.g.segment(nu * k, nu) -= cfg.R.cwiseProduct(refs.inputs[k] - prep.refs.inputs[k]);
  }

  const QPSolution sol = solve_box_qp(qp, warm);

  FeedbackResult res;
  res.stats.kkt_residual = sol.kkt_residual;
  res.stats.qp_iterations = sol.iterations;
  res.stats.regularized = sol.regularized;
  res.stats.degraded = sol.iteration_limit;

  auto& plan = res.solution;
  plan.controls = prep.traj.controls;
  if (!sol.iteration_limit) {
    for (int k = 0; k < N; ++k) {
      plan.controls[k] = (plan.controls[k] + sol.x.segment(nu * k, nu))
                             .cwiseMax(cfg.u_min)
                             .cwiseMin(cfg.u_max);
    }
  }
  plan.states = rollout(x_hat, plan.controls, prep.params, cfg.dt);

  const ControlVec u0 = plan.controls.front().cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
  res.u_apply = Control::from_vec(u0);
  res.warm_start = shift(plan, prep.params, cfg.dt);
  return res;
}

double ocp_kkt_residual(const ShootingTrajectory& traj, const StateVec& x_hat,
                        const ModelParams& params, const ReferenceHorizon& refs,
                        const OcpConfig& cfg) {
  ShootingTrajectory single;
  single.controls = traj.controls;
  single.states = rollout(x_hat, traj.controls, params, cfg.dt);
  const PreparedQP lin = prepare(single, params, refs, cfg);
  // exact reduced gradient = 2 * (Gamma' W r + R (u - u_r)); the QP carries half of it
  const Eigen::VectorXd grad = 2.0 * lin.qp.g;
  Eigen::VectorXd u(kControlDim * cfg.N), lb(u.size()), ub(u.size());
  for (int k = 0; k < cfg.N; ++k) {
    u.segment(kControlDim * k, kControlDim) = traj.controls[k];
    lb.segment(kControlDim * k, kControlDim) = cfg.u_min;
    ub.segment(kControlDim * k, kControlDim) = cfg.u_max;
  }
  return (u - (u - grad).cwiseMax(lb).cwiseMin(ub)).cwiseAbs().maxCoeff();
}

NmpcController::NmpcController(OcpConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void NmpcController::initialize(const StateVec& x0, const ModelParams& params) {
  warm_ = initial_trajectory(x0, params, cfg_);
  prepared_ = false;
  qp_warm_ = {};
  last_applied_ = {};
}

void NmpcController::prepare(const ModelParams& params, const ReferenceHorizon& refs) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  prep_ = tnmpc::prepare(warm_, params, refs, cfg_);
  prepared_ = true;
  timing_.preparation_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
}

FeedbackResult NmpcController::feedback(const StateVec& x_hat, const ModelParams& params,
                                        const ReferenceHorizon& refs) {
  using clock = std::chrono::steady_clock;
  if (!initialized()) initialize(x_hat, params);
  if (!prepared_) prepare(params, refs);
  const auto t0 = clock::now();
  FeedbackResult res = tnmpc::feedback(prep_, x_hat, refs, cfg_, &qp_warm_);
  prepared_ = false;
  if (res.stats.degraded) {
    res.u_apply = last_applied_;
  } else {
    // the next QP is posed in increments around the shifted plan
    qp_warm_.x.setZero(kControlDim * cfg_.N);
    qp_warm_.active_set.clear();
  }
  last_applied_ = res.u_apply;
  warm_ = res.warm_start;
  timing_.feedback_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return res;
}

}  // namespace tnmpc
