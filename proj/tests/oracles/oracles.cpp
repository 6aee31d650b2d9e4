#include "oracles.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

Eigen::VectorXd enumerate_box_qp(const tnmpc::DenseBoxQP& qp) {
  const int n = static_cast<int>(qp.g.size());
  long total = 1;
  for (int i = 0; i < n; ++i) total *= 3;

  Eigen::VectorXd best;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<int> code(n);
  for (long c = 0; c < total; ++c) {
    long r = c;
    bool usable = true;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      code[i] = static_cast<int>(r % 3);
      r /= 3;
      if (code[i] == 0) {
        free_idx.push_back(i);
      } else {
        const double b = code[i] == 1 ? qp.lb(i) : qp.ub(i);
        if (!std::isfinite(b)) usable = false;
        x(i) = b;
      }
    }
    if (!usable) continue;
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      Eigen::MatrixXd Hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs(a) = -qp.g(free_idx[a]);
        for (int j = 0; j < n; ++j) {
          if (code[j] != 0) rhs(a) -= qp.H(free_idx[a], j) * x(j);
        }
        for (int b = 0; b < nf; ++b) Hff(a, b) = qp.H(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd xf = Hff.fullPivLu().solve(rhs);
      for (int a = 0; a < nf; ++a) x(free_idx[a]) = xf(a);
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i) {
      if (x(i) < qp.lb(i) - 1e-12 || x(i) > qp.ub(i) + 1e-12) feasible = false;
    }
    if (!feasible) continue;
    const double f = 0.5 * x.dot(qp.H * x) + qp.g.dot(x);
    if (f < best_f) {
      best_f = f;
      best = x;
    }
  }
  return best;
}

Eigen::VectorXd kinematics(const Eigen::VectorXd& x, const Eigen::Vector2d& u, double mu,
                           double kappa, double eta, double v, const tnmpc::VehicleGeometry& g) {
  const double theta = x(2), psi = x(5);
  const double beta = theta - psi - u(1);
  const double speed = mu * v;
  Eigen::VectorXd d(6);
  d(0) = speed * std::cos(theta);
  d(1) = speed * std::sin(theta);
  d(2) = speed * std::tan(kappa * u(0)) / g.tractor_wheelbase;
  d(3) = speed * std::cos(psi);
  d(4) = speed * std::sin(psi);
  d(5) = speed / g.trailer_length *
         (std::sin(eta * u(1) + beta) +
          g.drawbar_length / g.tractor_wheelbase * std::tan(kappa * u(0)) *
              std::cos(eta * u(1) + beta));
  return d;
}

Eigen::VectorXd integrate_fine(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& x0, double T, int steps) {
  // Dormand-Prince tableau, 5th-order solution
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  const double h = T / steps;
  Eigen::VectorXd x = x0;
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = f(x);
    const Eigen::VectorXd k2 = f(x + h * a21 * k1);
    const Eigen::VectorXd k3 = f(x + h * (a31 * k1 + a32 * k2));
    const Eigen::VectorXd k4 = f(x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Eigen::VectorXd k5 = f(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Eigen::VectorXd k6 = f(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    x += h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  }
  return x;
}

Eigen::MatrixXd central_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

Eigen::MatrixXd ekf_covariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& C,
                               const Eigen::MatrixXd& Rm, const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& Qp) {
  Eigen::MatrixXd Pu = P;
  if (C.rows() > 0) {
    const Eigen::MatrixXd Sm = C * P * C.transpose() + Rm;
    const Eigen::MatrixXd K = P * C.transpose() * Sm.inverse();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(P.rows(), P.cols());
    // Joseph form
    Pu = (I - K * C) * P * (I - K * C).transpose() + K * Rm * K.transpose();
  }
  Eigen::MatrixXd Pn = A * Pu * A.transpose() + Qp;
  return 0.5 * (Pn + Pn.transpose());
}

ScanResult scan_projection(const tnmpc::Path& path, double px, double py, double step) {
  ScanResult best{0.0, std::numeric_limits<double>::infinity()};
  const double L = path.total_length();
  const long n = static_cast<long>(std::ceil(L / step));
  for (long i = 0; i <= n; ++i) {
    const double s = std::min(L, i * step);
    const tnmpc::PathPoint p = path.at(s);
    const double d = std::hypot(px - p.x, py - p.y);
    if (d < best.distance) best = {s, d};
  }
  return best;
}

double rk4_order_slope(int samples, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const tnmpc::VehicleGeometry g;
  const std::vector<double> dts = {0.2, 0.1, 0.05, 0.025};
  std::vector<double> log_err(dts.size(), 0.0);
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd x(6);
    x << U(rng), U(rng), 0.8 * U(rng), U(rng) - 2.0, U(rng), 0.8 * U(rng);
    const Eigen::Vector2d u(0.5 * U(rng), 0.35 * U(rng));
    const double mu = 0.8 + 0.2 * std::abs(U(rng));
    const double kappa = 0.8 + 0.2 * std::abs(U(rng));
    const double eta = 0.8 + 0.2 * std::abs(U(rng));
    const double v = 1.0 + 0.5 * std::abs(U(rng));
    tnmpc::ModelParams p{{mu, kappa, eta}, v, g};
    auto f = [&](const Eigen::VectorXd& z) { return kinematics(z, u, mu, kappa, eta, v, g); };
    const double T = 0.8;
    const Eigen::VectorXd ref = integrate_fine(f, x, T, 800);
    for (std::size_t i = 0; i < dts.size(); ++i) {
      tnmpc::StateVec got(x);
      const int n = static_cast<int>(std::lround(T / dts[i]));
      for (int k = 0; k < n; ++k) got = tnmpc::rk4_step(got, u, p, dts[i]);
      log_err[i] += std::log((got - ref).norm()) / samples;
    }
  }
  // least-squares slope of mean log error against log dt
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    mx += std::log(dts[i]) / dts.size();
    my += log_err[i] / dts.size();
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < dts.size(); ++i) {
    const double dx = std::log(dts[i]) - mx;
    sxy += dx * (log_err[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace oracle
