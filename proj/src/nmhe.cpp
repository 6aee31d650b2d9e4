#include "tnmpc/nmhe.hpp"

#include "tnmpc/errors.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <limits>

namespace tnmpc {

namespace {

// estimation-state index observed by each output channel
constexpr int kOutputIndex[kMeasDim] = {kEXt, kEYt, kEXi, kEYi, kEBeta, kEV};
constexpr int kSlipIndex[3] = {kEMu, kEKappa, kEEta};

using clock_type = std::chrono::steady_clock;

double elapsed_ms(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

}  // namespace

MeasVec measurement_model(const EstVec& z, const Control&) {
  MeasVec y;
  for (int c = 0; c < kMeasDim; ++c) y(c) = z(kOutputIndex[c]);
  return y;
}

Eigen::Matrix<double, kMeasDim, kEstDim> measurement_jacobian() {
  Eigen::Matrix<double, kMeasDim, kEstDim> C = Eigen::Matrix<double, kMeasDim, kEstDim>::Zero();
  for (int c = 0; c < kMeasDim; ++c) C(c, kOutputIndex[c]) = 1.0;
  return C;
}

EstimationWindow::EstimationWindow(int capacity, double dt) : capacity_(capacity), dt_(dt) {
  if (capacity < 1) throw ConfigError("estimation window needs capacity >= 1");
  if (!(dt > 0.0)) throw ConfigError("estimation window needs dt > 0");
}

std::optional<MeasSample> EstimationWindow::push(const MeasSample& s) {
  if (!samples_.empty() && std::abs(s.t - (samples_.back().t + dt_)) > 1e-6) {
    throw TimestampError("sample at t=" + std::to_string(s.t) + " does not follow t=" +
                         std::to_string(samples_.back().t));
  }
  std::optional<MeasSample> evicted;
  if (full()) {
    evicted = samples_.front();
    samples_.pop_front();
  }
  samples_.push_back(s);
  return evicted;
}

void MheConfig::validate() const {
  if (M < 1) throw ConfigError("mhe.M must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("mhe.dt must be positive");
  if ((sigma_y.array() <= 0.0).any() || (sigma_u.array() <= 0.0).any() ||
      (sigma_prior.array() <= 0.0).any() || (sigma_process.array() <= 0.0).any()) {
    throw ConfigError("mhe standard deviations must be positive");
  }
  if (!(slip_min <= slip_max)) throw ConfigError("mhe slip bounds crossed");
  geom.validate();
}

ArrivalCost initial_arrival_cost(const EstVec& prior, const MheConfig& cfg) {
  ArrivalCost arr;
  arr.prior = prior;
  arr.sqrt_weight = cfg.sigma_prior.cwiseInverse().asDiagonal();
  return arr;
}

ArrivalCost update_arrival_cost(const ArrivalCost& arr, const MeasSample& evicted,
                                const EstVec& z0, const ControlVec& u0,
                                const EstVec& next_prior, const MheConfig& cfg) {
  constexpr int n = kEstDim;
  int m = 0;
  for (int c = 0; c < kMeasDim; ++c) m += evicted.has(c) ? 1 : 0;

  const EstJacobians jac = step_jacobians(z0, u0, cfg.geom, cfg.dt, nullptr, cfg.hitch_model);
  const EstVec wp = cfg.sigma_process.cwiseInverse();

  // rows: prior | measurement | process; columns: (z0, z1)
  Eigen::MatrixXd stack = Eigen::MatrixXd::Zero(2 * n + m, 2 * n);
  stack.topLeftCorner(n, n) = arr.sqrt_weight;
  int row = n;
  for (int c = 0; c < kMeasDim; ++c) {
    if (!evicted.has(c)) continue;
    stack(row++, kOutputIndex[c]) = 1.0 / cfg.sigma_y(c);
  }
  stack.block(row, 0, n, n) = -(wp.asDiagonal() * jac.d_state);
  stack.block(row, n, n, n) = wp.asDiagonal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(stack);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(2 * n).triangularView<Eigen::Upper>();

  ArrivalCost out;
  out.prior = next_prior;
  out.sqrt_weight = R.bottomRightCorner(n, n);
  for (int i = 0; i < n; ++i) {
    if (out.sqrt_weight(i, i) < 0.0) out.sqrt_weight.row(i) *= -1.0;
  }
  const double dmax = out.sqrt_weight.diagonal().maxCoeff();
  const double dmin = out.sqrt_weight.diagonal().minCoeff();
  if (!(dmin > 1e-12 * dmax) || !out.sqrt_weight.allFinite()) {
    // re-triangularize the raw factor and floor the lost directions
    Eigen::HouseholderQR<EstMat> re(out.sqrt_weight);
    out.sqrt_weight = re.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i) {
      if (out.sqrt_weight(i, i) < 0.0) out.sqrt_weight.row(i) *= -1.0;
      out.sqrt_weight(i, i) = std::max(out.sqrt_weight(i, i), 1e-12 * std::max(dmax, 1.0));
    }
    out.rank_deficient = true;
  }
  return out;
}

MovingHorizonEstimator::MovingHorizonEstimator(MheConfig cfg)
    : cfg_(std::move(cfg)), window_(cfg_.M, cfg_.dt) {
  cfg_.validate();
}

void MovingHorizonEstimator::initialize(const EstVec& prior) {
  window_ = EstimationWindow(cfg_.M, cfg_.dt);
  arrival_ = initial_arrival_cost(prior, cfg_);
  nodes_.clear();
  controls_.clear();
  jac_.clear();
  defects_.clear();
  pending_ = false;
  linearized_ = false;
  have_solution_ = false;
}

void MovingHorizonEstimator::prepare() {
  if (pending_) return;
  const auto t0 = clock_type::now();
  if (window_.full()) {
    arrival_ = update_arrival_cost(arrival_, window_.front(), step_input(0), controls_[0],
                                   nodes_[1], cfg_);
    delta_i_before_ = controls_[0](1);
    window_.pop_front();
    nodes_.erase(nodes_.begin());
    controls_.erase(controls_.begin());
  }
  if (nodes_.empty()) {
    nodes_.push_back(arrival_.prior);
  } else {
    const MeasSample& last = window_.back();
    ControlVec u = controls_.empty() ? ControlVec::Zero() : controls_.back();
    if (last.has(kChDeltaT)) u(0) = last.u.delta_t;
    if (last.has(kChDeltaI)) u(1) = last.u.delta_i;
    controls_.push_back(u);
    nodes_.push_back(rk4_step(step_input(static_cast<int>(controls_.size()) - 1), u, cfg_.geom,
                              cfg_.dt, cfg_.hitch_model));
  }
  pending_ = true;
  linearize();
  stats_.preparation_ms = elapsed_ms(t0);
}

void MovingHorizonEstimator::add_sample(const MeasSample& s) {
  if (!window_.empty() && std::abs(s.t - (window_.back().t + cfg_.dt)) > 1e-6) {
    throw TimestampError("sample at t=" + std::to_string(s.t) + " does not follow t=" +
                         std::to_string(window_.back().t));
  }
  if (window_.empty()) delta_i_before_ = s.has(kChDeltaI) ? s.u.delta_i : 0.0;
  if (!pending_) {
    stats_.preparation_ms = 0.0;
    prepare();
  }
  window_.push(s);
  pending_ = false;
}

void MovingHorizonEstimator::linearize() {
  const auto n = controls_.size();
  jac_.resize(n);
  defects_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    EstVec next;
    jac_[k] = step_jacobians(step_input(static_cast<int>(k)), controls_[k], cfg_.geom, cfg_.dt,
                             &next, cfg_.hitch_model);
    defects_[k] = next - nodes_[k + 1];
  }
  linearized_ = true;
}

EstVec MovingHorizonEstimator::step_input(int k) const {
  EstVec z = nodes_[k];
  if (cfg_.hitch_model == HitchModel::kKinematic) {
    const double before = k == 0 ? delta_i_before_ : controls_[k - 1](1);
    z(kEBeta) -= controls_[k](1) - before;
  }
  return z;
}

MovingHorizonEstimator::Condensed MovingHorizonEstimator::condense() const {
  const int ns = window_.size();
  const int ni = ns - 1;
  const int nv = kEstDim + kControlDim * ni;

  int rows = kEstDim;
  for (int k = 0; k < ns; ++k) {
    for (int c = 0; c < kMeasDim; ++c) rows += window_[k].has(c) ? 1 : 0;
    if (k > 0) rows += (window_[k].has(kChDeltaT) ? 1 : 0) + (window_[k].has(kChDeltaI) ? 1 : 0);
  }

  Condensed out;
  out.J = Eigen::MatrixXd::Zero(rows, nv);
  out.r.resize(rows);
  out.J.topLeftCorner(kEstDim, kEstDim) = arrival_.sqrt_weight;
  out.r.head(kEstDim) = arrival_.sqrt_weight * (nodes_[0] - arrival_.prior);
  int row = kEstDim;

  // node sensitivities: dz_k = S_k * (dz0, du) + c_k
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(kEstDim, nv);
  S.leftCols(kEstDim).setIdentity();
  EstVec c = EstVec::Zero();
  for (int k = 0; k < ns; ++k) {
    const MeasSample& smp = window_[k];
    const EstVec z = nodes_[k] + c;
    for (int ch = 0; ch < kMeasDim; ++ch) {
      if (!smp.has(ch)) continue;
      const double w = 1.0 / cfg_.sigma_y(ch);
      out.J.row(row) = w * S.row(kOutputIndex[ch]);
      out.r(row) = w * (z(kOutputIndex[ch]) - smp.y(ch));
      ++row;
    }
    if (k > 0) {
      const int prev = kEstDim + kControlDim * (k - 1);
      for (int j = 0; j < kControlDim; ++j) {
        if (!smp.has(kChDeltaT + j)) continue;
        const double w = 1.0 / cfg_.sigma_u(j);
        const double measured = j == 0 ? smp.u.delta_t : smp.u.delta_i;
        out.J(row, prev + j) = w;
        out.r(row) = w * (controls_[k - 1](j) - measured);
        ++row;
      }
    }
    if (k == ni) break;
    const int col = kEstDim + kControlDim * k;
    if (cfg_.hitch_model == HitchModel::kKinematic) {
      S(kEBeta, col + 1) -= 1.0;
      if (k > 0) S(kEBeta, col - kControlDim + 1) += 1.0;
    }
    const auto& A = jac_[k].d_state;
    S = (A * S).eval();
    S.middleCols(col, kControlDim) += jac_[k].d_control;
    c = A * c + defects_[k];
  }
  return out;
}

DenseBoxQP MovingHorizonEstimator::build_qp(const Condensed& cd) const {
  DenseBoxQP qp;
  qp.H = cd.J.transpose() * cd.J;
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  qp.g = cd.J.transpose() * cd.r;
  const auto nv = qp.g.size();
  qp.lb = Eigen::VectorXd::Constant(nv, -std::numeric_limits<double>::infinity());
  qp.ub = Eigen::VectorXd::Constant(nv, std::numeric_limits<double>::infinity());
  for (int idx : kSlipIndex) {
    qp.lb(idx) = std::min(0.0, cfg_.slip_min - nodes_[0](idx));
    qp.ub(idx) = std::max(0.0, cfg_.slip_max - nodes_[0](idx));
  }
  return qp;
}

MheEstimate MovingHorizonEstimator::estimate() {
  if (window_.empty() || pending_) throw ConfigError("estimate() needs an attached sample");
  if (!linearized_) {
    const auto tp = clock_type::now();
    linearize();
    stats_.preparation_ms += elapsed_ms(tp);
  }
  const auto t0 = clock_type::now();

  const Condensed cd = condense();
  const DenseBoxQP qp = build_qp(cd);
  const QPSolution sol = solve_box_qp(qp);

  MheStats st;
  st.preparation_ms = stats_.preparation_ms;
  st.kkt_residual = sol.kkt_residual;
  st.qp_iterations = sol.iterations;
  st.regularized = sol.regularized;
  st.degraded = sol.iteration_limit || !sol.x.allFinite();

  if (!st.degraded) {
    EstVec z0 = nodes_[0] + sol.x.head(kEstDim);
    for (int idx : kSlipIndex) z0(idx) = std::clamp(z0(idx), cfg_.slip_min, cfg_.slip_max);
    for (std::size_t k = 0; k < controls_.size(); ++k) {
      controls_[k] += sol.x.segment(kEstDim + kControlDim * static_cast<Eigen::Index>(k),
                                    kControlDim);
    }
    nodes_[0] = z0;
    for (std::size_t k = 0; k < controls_.size(); ++k) {
      nodes_[k + 1] = rk4_step(step_input(static_cast<int>(k)), controls_[k], cfg_.geom, cfg_.dt,
                               cfg_.hitch_model);
    }
    have_solution_ = true;
  }
  linearized_ = false;

  MheEstimate est;
  est.z_hat = EstState::from_vec(nodes_.back());
  est.slip = est.z_hat.slip;
  st.mu_clamped = est.slip.mu <= cfg_.slip_min || est.slip.mu >= cfg_.slip_max;
  st.kappa_clamped = est.slip.kappa <= cfg_.slip_min || est.slip.kappa >= cfg_.slip_max;
  st.eta_clamped = est.slip.eta <= cfg_.slip_min || est.slip.eta >= cfg_.slip_max;
  st.estimation_ms = elapsed_ms(t0);
  est.stats = st;
  stats_ = st;
  last_ = est;
  return est;
}

double MovingHorizonEstimator::cost() const {
  double cost = (arrival_.sqrt_weight * (nodes_[0] - arrival_.prior)).squaredNorm();
  const int ns = window_.size();
  for (int k = 0; k < ns; ++k) {
    const MeasSample& smp = window_[k];
    for (int ch = 0; ch < kMeasDim; ++ch) {
      if (!smp.has(ch)) continue;
      const double r = (nodes_[k](kOutputIndex[ch]) - smp.y(ch)) / cfg_.sigma_y(ch);
      cost += r * r;
    }
    if (k == 0) continue;
    const ControlVec um(smp.u.delta_t, smp.u.delta_i);
    for (int j = 0; j < kControlDim; ++j) {
      if (!smp.has(kChDeltaT + j)) continue;
      const double r = (controls_[k - 1](j) - um(j)) / cfg_.sigma_u(j);
      cost += r * r;
    }
  }
  return cost;
}

double MovingHorizonEstimator::kkt_residual() const {
  MovingHorizonEstimator lin = *this;
  lin.linearize();
  const Condensed cd = lin.condense();
  const DenseBoxQP qp = lin.build_qp(cd);
  const Eigen::VectorXd grad = 2.0 * qp.g;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(grad.size());
  return (zero - (zero - grad).cwiseMax(qp.lb).cwiseMin(qp.ub)).cwiseAbs().maxCoeff();
}

}  // namespace tnmpc
