#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace tnmpc {

/// min 0.5 x'Hx + g'x  s.t.  lb <= x <= ub  (bounds may be +-infinity)
struct DenseBoxQP {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  Eigen::Index size() const { return g.size(); }
  /// Throws ConfigError on shape mismatch, asymmetric H (1e-10) or lb > ub.
  void validate() const;
};

enum class BoundStatus : std::uint8_t { kFree, kAtLower, kAtUpper };

struct QPWarmStart {
  Eigen::VectorXd x;
  std::vector<BoundStatus> active_set;  ///< may be empty
};

struct QPSolution {
  Eigen::VectorXd x;
  std::vector<BoundStatus> active_set;
  double kkt_residual = 0.0;  ///< max-norm of the projected gradient
  int iterations = 0;
  bool regularized = false;      ///< H was shifted to make it positive definite
  bool iteration_limit = false;  ///< returned the last iterate after the limit
};

struct QPOptions {
  int max_iterations = 0;         ///< 0 selects 10 * n
  double min_eigenvalue = 1e-8;  ///< regularization floor for the Hessian
};

double objective(const DenseBoxQP& qp, const Eigen::VectorXd& x);
/// || x - clamp(x - (Hx + g)) ||_inf
double projected_gradient_norm(const DenseBoxQP& qp, const Eigen::VectorXd& x);

/// Primal active-set method. Iterates stay feasible; the result is clamped to
/// the box as the last step.
QPSolution solve_box_qp(const DenseBoxQP& qp, const QPWarmStart* warm = nullptr,
                        const QPOptions& opts = {});

}  // namespace tnmpc
