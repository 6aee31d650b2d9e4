#pragma once

/**
 * @file
 * @brief Moving horizon estimation of pose, slip, hitch angle and speed.
 *
 * Least-squares problem over the last M samples of the 11-state estimation
 * model: arrival cost |L (z_0 - prior)|^2, measured outputs weighted by
 * 1/sigma_y, measured steering angles weighted by 1/sigma_u (the interval
 * controls are decision variables), slips boxed to [slip_min, slip_max].
 * One Gauss-Newton iteration per sample on the condensed problem in
 * (dz_0, du_0 .. du_{M-2}); node states are rolled out from z_0.
 *
 * When the window is full the oldest sample is absorbed into the arrival cost
 * by a square-root (QR) EKF update and prediction with process-noise
 * inflation, linearized at the current solution.
 */

#include "tnmpc/box_qp.hpp"
#include "tnmpc/vehicle_model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

namespace tnmpc {

inline constexpr int kMeasDim = 6;
using MeasVec = Eigen::Matrix<double, kMeasDim, 1>;
using EstMat = Eigen::Matrix<double, kEstDim, kEstDim>;

/// Measurement channel bits: outputs (xt, yt, xi, yi, beta, v) then inputs (delta_t, delta_i).
enum MeasChannel : std::uint8_t {
  kChXt = 0, kChYt, kChXi, kChYi, kChBeta, kChV, kChDeltaT, kChDeltaI
};
inline constexpr std::uint8_t kMaskAll = 0xFF;
inline constexpr std::uint8_t kMaskGps = 0x0F;  ///< the four position channels

struct MeasSample {
  double t = 0.0;
  MeasVec y = MeasVec::Zero();
  Control u;
  std::uint8_t mask = kMaskAll;  ///< set bit = channel available

  bool has(int channel) const { return (mask >> channel) & 1u; }
  bool gps_available() const { return (mask & kMaskGps) == kMaskGps; }
};

/// y = (xt, yt, xi, yi, beta, v); the measured inputs enter the cost separately.
MeasVec measurement_model(const EstVec& z, const Control& u = {});
/// Constant selection matrix dh/dz.
Eigen::Matrix<double, kMeasDim, kEstDim> measurement_jacobian();

class EstimationWindow {
 public:
  EstimationWindow(int capacity, double dt);

  /// Appends `s`; throws TimestampError unless s.t == back().t + dt.
  /// Returns the evicted sample when the window was full.
  std::optional<MeasSample> push(const MeasSample& s);

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(samples_.size()); }
  bool full() const { return size() == capacity_; }
  bool empty() const { return samples_.empty(); }
  const MeasSample& operator[](int i) const { return samples_[i]; }
  const MeasSample& front() const { return samples_.front(); }
  const MeasSample& back() const { return samples_.back(); }
  void pop_front() { samples_.pop_front(); }
  double dt() const { return dt_; }

 private:
  int capacity_;
  double dt_;
  std::deque<MeasSample> samples_;
};

struct ArrivalCost {
  EstVec prior = EstVec::Zero();
  EstMat sqrt_weight = EstMat::Identity();  ///< upper-triangular L, information L'L
  bool rank_deficient = false;
};

struct MheConfig {
  int M = 20;
  double dt = 0.2;
  VehicleGeometry geom;
  MeasVec sigma_y = (MeasVec() << 0.03, 0.03, 0.03, 0.03, 0.0175, 0.1).finished();
  ControlVec sigma_u = ControlVec(0.0175, 0.0175);
  EstVec sigma_prior =
      (EstVec() << 10.0, 10.0, 0.1, 10.0, 10.0, 0.1, 0.25, 0.25, 0.25, 0.1745, 0.1).finished();
  EstVec sigma_process =
      (EstVec() << 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.005, 0.005, 0.005, 0.01, 0.05)
          .finished();
  double slip_min = 0.25;
  double slip_max = 1.0;
  /// kKinematic integrates beta through the window (theta' - psi', minus the
  /// trailer steering change at each sample); kRandomWalk holds it constant.
  HitchModel hitch_model = HitchModel::kKinematic;

  void validate() const;
};

ArrivalCost initial_arrival_cost(const EstVec& prior, const MheConfig& cfg);

/// Square-root EKF measurement update with the unmasked output channels of
/// `evicted` at `z0`, followed by a prediction through one est_dynamics step
/// (input `u0`) with process-noise inflation. The new prior is `next_prior`.
/// `z0` is the state entering the step, i.e. after any hitch-angle jump.
ArrivalCost update_arrival_cost(const ArrivalCost& arr, const MeasSample& evicted,
                                const EstVec& z0, const ControlVec& u0,
                                const EstVec& next_prior, const MheConfig& cfg);

struct MheStats {
  double preparation_ms = 0.0;
  double estimation_ms = 0.0;
  double kkt_residual = 0.0;
  int qp_iterations = 0;
  bool regularized = false;
  bool degraded = false;
  bool mu_clamped = false, kappa_clamped = false, eta_clamped = false;
};

struct MheEstimate {
  EstState z_hat;  ///< terminal node
  SlipParams slip;
  MheStats stats;
};

class MovingHorizonEstimator {
 public:
  explicit MovingHorizonEstimator(MheConfig cfg);

  void initialize(const EstVec& prior);

  /// Preparation for the next sample: absorbs the oldest sample into the
  /// arrival cost when the window is full, shifts the solution, predicts the
  /// node of the upcoming sample and linearizes.
  void prepare();
  /// Attaches a measurement to the predicted node (preparing first if needed).
  /// The sample's steering angles measure the control of the interval ending at it.
  void add_sample(const MeasSample& s);
  /// One Gauss-Newton iteration on the current window.
  MheEstimate estimate();

  const EstimationWindow& window() const { return window_; }
  const ArrivalCost& arrival() const { return arrival_; }
  const std::vector<EstVec>& nodes() const { return nodes_; }
  const std::vector<ControlVec>& controls() const { return controls_; }
  const MheConfig& config() const { return cfg_; }
  /// Least-squares objective of the current window solution.
  double cost() const;
  /// Projected-gradient norm of the window problem at the current solution.
  double kkt_residual() const;
  const MheStats& last_stats() const { return stats_; }

 private:
  struct Condensed {
    Eigen::MatrixXd J;  // weighted residual Jacobian w.r.t. (dz0, du)
    Eigen::VectorXd r;  // weighted residuals at the linearization point
  };
  void linearize();
  /// Node k with the trailer-steering change of interval k applied to beta.
  EstVec step_input(int k) const;
  Condensed condense() const;
  DenseBoxQP build_qp(const Condensed& c) const;

  MheConfig cfg_;
  EstimationWindow window_;
  ArrivalCost arrival_;
  std::vector<EstVec> nodes_;        // one per sample (+1 pending when prepared)
  std::vector<ControlVec> controls_; // one per interval
  std::vector<EstJacobians> jac_;
  std::vector<EstVec> defects_;
  double delta_i_before_ = 0.0;  // trailer steering acting before interval 0
  bool pending_ = false;
  bool linearized_ = false;
  bool have_solution_ = false;
  MheEstimate last_;
  MheStats stats_;
};

}  // namespace tnmpc
