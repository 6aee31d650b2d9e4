#include "tnmpc/box_qp.hpp"

#include "tnmpc/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace tnmpc {

void DenseBoxQP::validate() const {
  const Eigen::Index n = g.size();
  if (H.rows() != n || H.cols() != n || lb.size() != n || ub.size() != n) {
    throw ConfigError("box QP dimensions do not match");
  }
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ConfigError("box QP Hessian is not symmetric");
  }
  if ((lb.array() > ub.array()).any()) throw ConfigError("box QP has lb > ub");
}

double objective(const DenseBoxQP& qp, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(qp.H * x) + qp.g.dot(x);
}

double projected_gradient_norm(const DenseBoxQP& qp, const Eigen::VectorXd& x) {
  const Eigen::VectorXd grad = qp.H * x + qp.g;
  const Eigen::VectorXd moved = (x - grad).cwiseMax(qp.lb).cwiseMin(qp.ub);
  return x.size() == 0 ? 0.0 : (x - moved).cwiseAbs().maxCoeff();
}

namespace {

// Returns H shifted so that its smallest eigenvalue is at least `floor`.
bool regularize(Eigen::MatrixXd& H, double floor) {
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() == Eigen::Success) {
    const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
    if (min_pivot * min_pivot >= floor) return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double rho = std::max(0.0, floor - lmin);
  if (rho == 0.0) return false;
  H.diagonal().array() += rho;
  return true;
}

}  // namespace

QPSolution solve_box_qp(const DenseBoxQP& qp, const QPWarmStart* warm, const QPOptions& opts) {
  qp.validate();
  const Eigen::Index n = qp.size();
  QPSolution sol;
  sol.active_set.assign(n, BoundStatus::kFree);
  sol.x = Eigen::VectorXd::Zero(n);
  if (n == 0) return sol;

  Eigen::MatrixXd H = qp.H;
  sol.regularized = regularize(H, opts.min_eigenvalue);
  const int max_iter = opts.max_iterations > 0 ? opts.max_iterations : static_cast<int>(10 * n);

  auto& x = sol.x;
  auto& ws = sol.active_set;
  if (warm && warm->x.size() == n) x = warm->x;
  const bool warm_set = warm && static_cast<Eigen::Index>(warm->active_set.size()) == n;
  for (Eigen::Index i = 0; i < n; ++i) {
    BoundStatus st = warm_set ? warm->active_set[i] : BoundStatus::kFree;
    if (st == BoundStatus::kAtLower && !std::isfinite(qp.lb(i))) st = BoundStatus::kFree;
    if (st == BoundStatus::kAtUpper && !std::isfinite(qp.ub(i))) st = BoundStatus::kFree;
    if (x(i) <= qp.lb(i)) st = BoundStatus::kAtLower;
    if (x(i) >= qp.ub(i)) st = BoundStatus::kAtUpper;
    if (st == BoundStatus::kAtLower) x(i) = qp.lb(i);
    if (st == BoundStatus::kAtUpper) x(i) = qp.ub(i);
    ws[i] = st;
  }

  std::vector<Eigen::Index> free_idx;
  free_idx.reserve(n);
  const double mult_tol = 1e-12 * std::max(1.0, qp.g.cwiseAbs().maxCoeff());

  for (int iter = 0;; ++iter) {
    if (iter >= max_iter) {
      sol.iteration_limit = true;
      break;
    }
    sol.iterations = iter + 1;

    free_idx.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ws[i] == BoundStatus::kFree) free_idx.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(free_idx.size());

    // equality-constrained minimizer over the free variables
    Eigen::VectorXd target(nf);
    bool feasible = true;
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    if (nf > 0) {
      Eigen::MatrixXd Hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        double r = -qp.g(i);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (ws[j] != BoundStatus::kFree) r -= H(i, j) * x(j);
        }
        rhs(a) = r;
        for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(i, free_idx[b]);
      }
      target = Hff.llt().solve(rhs);

      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        const double p = target(a) - x(i);
        double limit = std::numeric_limits<double>::infinity();
        if (p < 0.0 && std::isfinite(qp.lb(i))) limit = (qp.lb(i) - x(i)) / p;
        if (p > 0.0 && std::isfinite(qp.ub(i))) limit = (qp.ub(i) - x(i)) / p;
        if (limit < alpha) {
          alpha = std::max(0.0, limit);
          blocking = i;
          feasible = false;
        }
      }
    }

    if (!feasible) {
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        x(i) += alpha * (target(a) - x(i));
      }
      const bool lower = target(std::find(free_idx.begin(), free_idx.end(), blocking) -
                                free_idx.begin()) < x(blocking);
      ws[blocking] = lower ? BoundStatus::kAtLower : BoundStatus::kAtUpper;
      x(blocking) = lower ? qp.lb(blocking) : qp.ub(blocking);
      continue;
    }

    for (Eigen::Index a = 0; a < nf; ++a) x(free_idx[a]) = target(a);

    // multipliers of the fixed bounds: grad >= 0 at lower, grad <= 0 at upper
    const Eigen::VectorXd grad = H * x + qp.g;
    Eigen::Index release = -1;
    double worst = -mult_tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      double lambda = 0.0;
      if (ws[i] == BoundStatus::kAtLower) lambda = grad(i);
      else if (ws[i] == BoundStatus::kAtUpper) lambda = -grad(i);
      else continue;
      if (lambda < worst) {
        worst = lambda;
        release = i;
      }
    }
    if (release < 0) break;
    ws[release] = BoundStatus::kFree;
  }

  x = x.cwiseMax(qp.lb).cwiseMin(qp.ub);
  sol.kkt_residual = projected_gradient_norm(qp, x);
  return sol;
}

}  // namespace tnmpc
