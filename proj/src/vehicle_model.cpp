#include "tnmpc/vehicle_model.hpp"

#include "tnmpc/errors.hpp"

#include <string>

namespace tnmpc {

void VehicleGeometry::validate() const {
  if (!(tractor_wheelbase > 0.0) || !(trailer_length > 0.0) || !(drawbar_length > 0.0)) {
    throw ConfigError("vehicle geometry lengths must be strictly positive");
  }
}

StateVec VehicleState::vec() const {
  StateVec s;
  s << xt, yt, theta, xi, yi, psi;
  return s;
}

VehicleState VehicleState::from_vec(const StateVec& s) {
  return {s(kXt), s(kYt), s(kTheta), s(kXi), s(kYi), s(kPsi)};
}

EstVec EstState::vec() const {
  EstVec z;
  z << pose.xt, pose.yt, pose.theta, pose.xi, pose.yi, pose.psi, slip.mu, slip.kappa, slip.eta,
      beta, v;
  return z;
}

EstState EstState::from_vec(const EstVec& z) {
  EstState e;
  e.pose = VehicleState::from_vec(z.head<kStateDim>());
  e.slip = {z(kEMu), z(kEKappa), z(kEEta)};
  e.beta = z(kEBeta);
  e.v = z(kEV);
  return e;
}

namespace {

template <int N>
struct RhsEval {
  Eigen::Matrix<double, N, 1> f;
  Eigen::Matrix<double, N, N> dfdx;
  Eigen::Matrix<double, N, kControlDim> dfdu;
};

double checked_tan(double arg) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  // distance to the nearest odd multiple of pi/2
  const double r = std::remainder(arg - half_pi, std::numbers::pi);
  if (std::abs(r) < 1e-6) {
    throw DomainError("steering tangent argument " + std::to_string(arg) + " is at +-pi/2");
  }
  return std::tan(arg);
}

// Shared kinematics: every row carries the factor a = mu * v.
struct Kinematics {
  double a, tan_k, sec2_k, s_arg, c_arg, ct, st, cp, sp;
};

Kinematics kinematics(double a, double theta, double psi, double kappa_delta, double arg) {
  const double tk = checked_tan(kappa_delta);
  return {a, tk, 1.0 + tk * tk, std::sin(arg), std::cos(arg), std::cos(theta), std::sin(theta),
          std::cos(psi), std::sin(psi)};
}

template <int N>
void fill_pose_rows(RhsEval<N>& r, const Kinematics& k, const VehicleGeometry& g) {
  const double lt = g.tractor_wheelbase, li = g.trailer_length, l = g.drawbar_length;
  r.f(kXt) = k.a * k.ct;
  r.f(kYt) = k.a * k.st;
  r.f(kTheta) = k.a * k.tan_k / lt;
  r.f(kXi) = k.a * k.cp;
  r.f(kYi) = k.a * k.sp;
  r.f(kPsi) = k.a / li * (k.s_arg + l / lt * k.tan_k * k.c_arg);

  r.dfdx(kXt, kTheta) = -k.a * k.st;
  r.dfdx(kYt, kTheta) = k.a * k.ct;
  r.dfdx(kXi, kPsi) = -k.a * k.sp;
  r.dfdx(kYi, kPsi) = k.a * k.cp;
}

RhsEval<kStateDim> eval_model(const StateVec& s, const ControlVec& u, const ModelParams& p) {
  const auto& g = p.geom;
  const double kappa = p.slip.kappa, eta = p.slip.eta;
  const double beta = hitch_closure(s(kTheta), s(kPsi), u(1));
  const double arg = eta * u(1) + beta;
  const auto k = kinematics(p.slip.mu * p.v, s(kTheta), s(kPsi), kappa * u(0), arg);

  RhsEval<kStateDim> r;
  r.dfdx.setZero();
  r.dfdu.setZero();
  fill_pose_rows(r, k, g);

  const double lt = g.tractor_wheelbase, li = g.trailer_length, l = g.drawbar_length;
  const double dpsi_darg = k.a / li * (k.c_arg - l / lt * k.tan_k * k.s_arg);
  r.dfdx(kPsi, kTheta) = dpsi_darg;
  r.dfdx(kPsi, kPsi) = -dpsi_darg;
  r.dfdu(kTheta, 0) = k.a * kappa * k.sec2_k / lt;
  r.dfdu(kPsi, 0) = k.a / li * l / lt * kappa * k.sec2_k * k.c_arg;
  r.dfdu(kPsi, 1) = dpsi_darg * (eta - 1.0);
  return r;
}

RhsEval<kEstDim> eval_est(const EstVec& z, const ControlVec& u, const VehicleGeometry& g,
                          HitchModel hitch) {
  const double mu = z(kEMu), kappa = z(kEKappa), eta = z(kEEta), v = z(kEV);
  const double arg = eta * u(1) + z(kEBeta);
  const auto k = kinematics(mu * v, z(kETheta), z(kEPsi), kappa * u(0), arg);

  RhsEval<kEstDim> r;
  r.f.setZero();
  r.dfdx.setZero();
  r.dfdu.setZero();
  fill_pose_rows(r, k, g);

  const double lt = g.tractor_wheelbase, li = g.trailer_length, l = g.drawbar_length;
  // every pose row is mu * v * (unscaled row)
  const double unscaled[kStateDim] = {k.ct, k.st, k.tan_k / lt, k.cp, k.sp,
                                      (k.s_arg + l / lt * k.tan_k * k.c_arg) / li};
  for (int i = 0; i < kStateDim; ++i) {
    r.dfdx(i, kEMu) = v * unscaled[i];
    r.dfdx(i, kEV) = mu * unscaled[i];
  }

  const double dpsi_darg = k.a / li * (k.c_arg - l / lt * k.tan_k * k.s_arg);
  r.dfdx(kETheta, kEKappa) = k.a * u(0) * k.sec2_k / lt;
  r.dfdx(kEPsi, kEKappa) = k.a / li * l / lt * u(0) * k.sec2_k * k.c_arg;
  r.dfdx(kEPsi, kEEta) = dpsi_darg * u(1);
  r.dfdx(kEPsi, kEBeta) = dpsi_darg;

  r.dfdu(kETheta, 0) = k.a * kappa * k.sec2_k / lt;
  r.dfdu(kEPsi, 0) = k.a / li * l / lt * kappa * k.sec2_k * k.c_arg;
  r.dfdu(kEPsi, 1) = dpsi_darg * eta;

  if (hitch == HitchModel::kKinematic) {
    r.f(kEBeta) = r.f(kETheta) - r.f(kEPsi);
    r.dfdx.row(kEBeta) = r.dfdx.row(kETheta) - r.dfdx.row(kEPsi);
    r.dfdu.row(kEBeta) = r.dfdu.row(kETheta) - r.dfdu.row(kEPsi);
  }
  return r;
}

template <int N, class Rhs>
Eigen::Matrix<double, N, 1> rk4(Rhs&& rhs, const Eigen::Matrix<double, N, 1>& x, double dt) {
  const auto k1 = rhs(x);
  const auto k2 = rhs(x + 0.5 * dt * k1);
  const auto k3 = rhs(x + 0.5 * dt * k2);
  const auto k4 = rhs(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// RK4 with forward sensitivity propagation through each stage.
template <int N, class Eval>
StepJacobians<N> rk4_sens(Eval&& eval, const Eigen::Matrix<double, N, 1>& x, double dt,
                          Eigen::Matrix<double, N, 1>* next) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using MatX = Eigen::Matrix<double, N, N>;
  using MatU = Eigen::Matrix<double, N, kControlDim>;
  const MatX eye = MatX::Identity();

  const auto e1 = eval(x);
  const MatX kx1 = e1.dfdx;
  const MatU ku1 = e1.dfdu;

  const Vec x2 = x + 0.5 * dt * e1.f;
  const auto e2 = eval(x2);
  const MatX kx2 = e2.dfdx * (eye + 0.5 * dt * kx1);
  const MatU ku2 = e2.dfdx * (0.5 * dt * ku1) + e2.dfdu;

  const Vec x3 = x + 0.5 * dt * e2.f;
  const auto e3 = eval(x3);
  const MatX kx3 = e3.dfdx * (eye + 0.5 * dt * kx2);
  const MatU ku3 = e3.dfdx * (0.5 * dt * ku2) + e3.dfdu;

  const Vec x4 = x + dt * e3.f;
  const auto e4 = eval(x4);
  const MatX kx4 = e4.dfdx * (eye + dt * kx3);
  const MatU ku4 = e4.dfdx * (dt * ku3) + e4.dfdu;

  StepJacobians<N> j;
  j.d_state = eye + dt / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4);
  j.d_control = dt / 6.0 * (ku1 + 2.0 * ku2 + 2.0 * ku3 + ku4);
  if (next) *next = x + dt / 6.0 * (e1.f + 2.0 * e2.f + 2.0 * e3.f + e4.f);
  return j;
}

template <int N, class Step>
StepJacobians<N> forward_difference(Step&& step, const Eigen::Matrix<double, N, 1>& x,
                                    const ControlVec& u, double h) {
  StepJacobians<N> j;
  const auto base = step(x, u);
  for (int c = 0; c < N; ++c) {
    auto xp = x;
    xp(c) += h;
    j.d_state.col(c) = (step(xp, u) - base) / h;
  }
  for (int c = 0; c < kControlDim; ++c) {
    auto up = u;
    up(c) += h;
    j.d_control.col(c) = (step(x, up) - base) / h;
  }
  return j;
}

}  // namespace

StateVec dynamics(const StateVec& s, const ControlVec& u, const ModelParams& p) {
  const double a = p.slip.mu * p.v;
  const double tan_k = checked_tan(p.slip.kappa * u(0));
  const double arg = p.slip.eta * u(1) + hitch_closure(s(kTheta), s(kPsi), u(1));
  const auto& g = p.geom;
  StateVec d;
  d << a * std::cos(s(kTheta)), a * std::sin(s(kTheta)), a * tan_k / g.tractor_wheelbase,
      a * std::cos(s(kPsi)), a * std::sin(s(kPsi)),
      a / g.trailer_length *
          (std::sin(arg) + g.drawbar_length / g.tractor_wheelbase * tan_k * std::cos(arg));
  return d;
}

VehicleState dynamics(const VehicleState& s, const Control& u, const SlipParams& slip, double v,
                      const VehicleGeometry& geom) {
  return VehicleState::from_vec(dynamics(s.vec(), u.vec(), ModelParams{slip, v, geom}));
}

EstVec est_dynamics(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom,
                    HitchModel hitch) {
  const double a = z(kEMu) * z(kEV);
  const double tan_k = checked_tan(z(kEKappa) * u(0));
  const double arg = z(kEEta) * u(1) + z(kEBeta);
  EstVec d = EstVec::Zero();
  d(kEXt) = a * std::cos(z(kETheta));
  d(kEYt) = a * std::sin(z(kETheta));
  d(kETheta) = a * tan_k / geom.tractor_wheelbase;
  d(kEXi) = a * std::cos(z(kEPsi));
  d(kEYi) = a * std::sin(z(kEPsi));
  d(kEPsi) = a / geom.trailer_length *
             (std::sin(arg) + geom.drawbar_length / geom.tractor_wheelbase * tan_k * std::cos(arg));
  if (hitch == HitchModel::kKinematic) d(kEBeta) = d(kETheta) - d(kEPsi);
  return d;
}

StateVec rk4_step(const StateVec& s, const ControlVec& u, const ModelParams& p, double dt) {
  return rk4<kStateDim>([&](const StateVec& x) { return dynamics(x, u, p); }, s, dt);
}

EstVec rk4_step(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom, double dt,
                HitchModel hitch) {
  return rk4<kEstDim>([&](const EstVec& x) { return est_dynamics(x, u, geom, hitch); }, z, dt);
}

ModelJacobians step_jacobians(const StateVec& s, const ControlVec& u, const ModelParams& p,
                              double dt, StateVec* next) {
  return rk4_sens<kStateDim>([&](const StateVec& x) { return eval_model(x, u, p); }, s, dt, next);
}

EstJacobians step_jacobians(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom,
                            double dt, EstVec* next, HitchModel hitch) {
  return rk4_sens<kEstDim>([&](const EstVec& x) { return eval_est(x, u, geom, hitch); }, z, dt,
                           next);
}

ModelJacobians step_jacobians_fd(const StateVec& s, const ControlVec& u, const ModelParams& p,
                                 double dt, double h) {
  return forward_difference<kStateDim>(
      [&](const StateVec& x, const ControlVec& w) { return rk4_step(x, w, p, dt); }, s, u, h);
}

EstJacobians step_jacobians_fd(const EstVec& z, const ControlVec& u, const VehicleGeometry& geom,
                               double dt, double h, HitchModel hitch) {
  return forward_difference<kEstDim>(
      [&](const EstVec& x, const ControlVec& w) { return rk4_step(x, w, geom, dt, hitch); }, z,
      u, h);
}

}  // namespace tnmpc
