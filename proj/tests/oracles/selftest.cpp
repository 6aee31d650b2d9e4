#include "selftest.hpp"

#include "oracles.hpp"

#include "tnmpc/nmhe.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

namespace oracle {

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double floor) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = N(rng);
  return A * A.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

CheckResult check_qp_enumeration(int instances, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.05, 2.0);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    tnmpc::DenseBoxQP qp;
    qp.H = random_spd(n, rng, 0.1);
    qp.g = Eigen::VectorXd(n);
    qp.lb = Eigen::VectorXd(n);
    qp.ub = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) {
      qp.g(i) = 3.0 * N(rng);
      const double c = 0.5 * N(rng);
      qp.lb(i) = c - U(rng);
      qp.ub(i) = c + U(rng);
    }
    const Eigen::VectorXd ref = enumerate_box_qp(qp);
    const tnmpc::QPSolution sol = tnmpc::solve_box_qp(qp);
    worst = std::max(worst, (sol.x - ref).cwiseAbs().maxCoeff());
  }
  CheckResult r;
  r.name = "box QP vs exhaustive active-set enumeration";
  r.value = worst;
  r.limit = 1e-8;
  r.pass = worst < r.limit;
  r.detail = std::to_string(instances) + " instances, n=" + std::to_string(n);
  return r;
}

CheckResult check_arrival_cost(int instances, std::uint64_t seed) {
  constexpr int n = tnmpc::kEstDim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const tnmpc::MheConfig cfg;
  const Eigen::MatrixXd C_all = tnmpc::measurement_jacobian();
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    // covariance with entries of order one
    const Eigen::MatrixXd P = random_spd(n, rng, 0.05) / n;
    const Eigen::MatrixXd info = P.inverse();
    const Eigen::MatrixXd L0 = info.llt().matrixU();

    tnmpc::EstVec z0;
    z0 << 5 * U(rng), 5 * U(rng), 3 * U(rng), 5 * U(rng), 5 * U(rng), 3 * U(rng),
        0.75 + 0.25 * U(rng), 0.75 + 0.25 * U(rng), 0.75 + 0.25 * U(rng), 0.4 * U(rng),
        1.0 + 0.5 * U(rng);
    const tnmpc::ControlVec u0(0.5 * U(rng), 0.4 * U(rng));

    tnmpc::MeasSample ev;
    ev.mask = static_cast<std::uint8_t>(rng() & 0xFF);
    std::vector<int> rows;
    for (int c = 0; c < tnmpc::kMeasDim; ++c)
      if (ev.has(c)) rows.push_back(c);
    Eigen::MatrixXd C(rows.size(), n);
    Eigen::MatrixXd Rm = Eigen::MatrixXd::Zero(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      C.row(i) = C_all.row(rows[i]);
      Rm(i, i) = cfg.sigma_y(rows[i]) * cfg.sigma_y(rows[i]);
    }

    tnmpc::ArrivalCost arr;
    arr.prior = z0;
    arr.sqrt_weight = L0;
    const tnmpc::ArrivalCost out =
        tnmpc::update_arrival_cost(arr, ev, z0, u0, z0, cfg);
    const Eigen::MatrixXd Lw = out.sqrt_weight;
    const Eigen::MatrixXd P_sr = (Lw.transpose() * Lw).inverse();

    const Eigen::MatrixXd A = tnmpc::step_jacobians(z0, u0, cfg.geom, cfg.dt, nullptr, cfg.hitch_model).d_state;
    const Eigen::MatrixXd Qp = cfg.sigma_process.array().square().matrix().asDiagonal();
    const Eigen::MatrixXd P_ekf = ekf_covariance(P, C, Rm, A, Qp);

    const double err = (P_sr - P_ekf).cwiseAbs().maxCoeff() / std::max(1.0, P_ekf.cwiseAbs().maxCoeff());
    worst = std::max(worst, err);
  }
  CheckResult r;
  r.name = "square-root arrival update vs full-covariance EKF";
  r.value = worst;
  r.limit = 1e-8;
  r.pass = worst < r.limit;
  r.detail = std::to_string(instances) + " instances, 11 states, random channel masks";
  return r;
}

CheckResult check_rk4_order() {
  CheckResult r;
  r.name = "RK4 convergence order";
  r.value = rk4_order_slope();
  r.limit = 0.3;
  r.pass = std::abs(r.value - 4.0) <= r.limit;
  r.detail = "log-log slope, expected 4 +- 0.3";
  return r;
}

std::vector<CheckResult> run_selftest() {
  return {check_qp_enumeration(), check_arrival_cost(), check_rk4_order()};
}

void print_check(const CheckResult& r, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "[%s] %s: %.3e (limit %.3e) %s", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.value, r.limit, r.detail.c_str());
  out << buf << '\n';
}

}  // namespace oracle
