#include <doctest.h>

#include "oracles/oracles.hpp"
#include "oracles/selftest.hpp"
#include "tnmpc/errors.hpp"
#include "tnmpc/nmhe.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <random>

using namespace tnmpc;

namespace {

const VehicleGeometry kGeom;

// Samples generated by the 6-state model under zero-order-hold steering. The
// steering angles and hitch angle reported at sample k are those of the
// interval ending at k (the actuator position at the sampling instant).
struct SyntheticData {
  SlipParams slip{0.9, 0.85, 0.8};
  double v = 1.0;
  StateVec x;
  ControlVec u_prev = ControlVec::Zero();
  long k = 0;
  double noise = 0.0;
  std::mt19937_64 rng{7};

  SyntheticData() { x << 0, 0, 0, -kGeom.hitch_offset(), 0, 0; }

  ControlVec excitation(double t) const {
    return {0.4 * std::sin(2 * std::numbers::pi * t / 12.0),
            0.4 * std::sin(2 * std::numbers::pi * t / 9.0 + 1.0)};
  }

  MeasSample sample() {
    std::normal_distribution<double> N01;
    const MheConfig c;
    MeasSample s;
    s.t = 0.2 * k;
    s.y << x(kXt), x(kYt), x(kXi), x(kYi), hitch_closure(x(kTheta), x(kPsi), u_prev(1)), v;
    s.u = Control::from_vec(u_prev);
    if (noise > 0) {
      for (int i = 0; i < kMeasDim; ++i) s.y(i) += noise * c.sigma_y(i) * N01(rng);
      s.u.delta_t += noise * c.sigma_u(0) * N01(rng);
      s.u.delta_i += noise * c.sigma_u(1) * N01(rng);
    }
    return s;
  }

  void advance() {
    const ControlVec u = excitation(0.2 * k);
    x = rk4_step(x, u, ModelParams{slip, v, kGeom}, 0.2);
    u_prev = u;
    ++k;
  }

  EstVec prior() const {
    EstVec z;
    z << x, 1.0, 1.0, 1.0, hitch_closure(x(kTheta), x(kPsi), u_prev(1)), v;
    return z;
  }
};

MheEstimate step(MovingHorizonEstimator& mhe, SyntheticData& d) {
  mhe.add_sample(d.sample());
  const MheEstimate e = mhe.estimate();
  d.advance();
  mhe.prepare();
  return e;
}

double slip_error(const SlipParams& a, const SlipParams& b) {
  return std::max({std::abs(a.mu - b.mu), std::abs(a.kappa - b.kappa), std::abs(a.eta - b.eta)});
}

EstMat covariance(const ArrivalCost& a) {
  return (a.sqrt_weight.transpose() * a.sqrt_weight).inverse();
}

}  // namespace

TEST_CASE("measurement model") {
  EstVec z = EstVec::Zero();
  z(kEXt) = 1;
  z(kEYt) = 2;
  z(kEXi) = 3;
  z(kEYi) = 4;
  z(kEBeta) = 0.1;
  z(kEV) = 1;
  const MeasVec y = measurement_model(z);
  CHECK((y - (MeasVec() << 1, 2, 3, 4, 0.1, 1).finished()).norm() == 0.0);
  z(kEMu) = 0.3;
  z(kEEta) = 0.7;
  CHECK((measurement_model(z) - y).norm() == 0.0);

  std::mt19937 rng(1);
  std::uniform_real_distribution<double> U(-1, 1);
  const EstVec zr = EstVec::NullaryExpr([&] { return U(rng); });
  auto h = [](const Eigen::VectorXd& v) { return Eigen::VectorXd(measurement_model(EstVec(v))); };
  const Eigen::MatrixXd C = oracle::central_jacobian(h, zr);
  CHECK((C - measurement_jacobian()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("estimation window") {
  EstimationWindow w(3, 0.2);
  MeasSample s;
  for (int k = 0; k < 3; ++k) {
    s.t = 0.2 * k;
    CHECK_FALSE(w.push(s).has_value());
  }
  CHECK(w.full());
  s.t = 0.6;
  const auto ev = w.push(s);
  REQUIRE(ev.has_value());
  CHECK(ev->t == 0.0);
  CHECK(w.size() == 3);
  CHECK(w.front().t == doctest::Approx(0.2));
  s.t = 1.0;
  CHECK_THROWS_AS(w.push(s), TimestampError);
  CHECK_THROWS_AS(EstimationWindow(0, 0.2), ConfigError);
}

TEST_CASE("sample masks") {
  MeasSample s;
  CHECK(s.gps_available());
  s.mask = kMaskAll & ~kMaskGps;
  CHECK_FALSE(s.gps_available());
  CHECK(s.has(kChBeta));
  CHECK_FALSE(s.has(kChXi));
}

TEST_CASE("config validation") {
  MheConfig c;
  CHECK_NOTHROW(c.validate());
  c.sigma_y(2) = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.slip_min = 1.2;
  CHECK_THROWS_AS(MovingHorizonEstimator{c}, ConfigError);
}

TEST_CASE("arrival update matches a full-covariance EKF") {
  const auto r = oracle::check_arrival_cost(100, 12);
  CHECK(r.pass);
  CHECK(r.value < 1e-8);
}

TEST_CASE("arrival update: a measurement never removes information") {
  const MheConfig cfg;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    EstVec z = EstVec::NullaryExpr([&] { return U(rng); });
    z.segment<3>(kEMu) = Eigen::Vector3d::Constant(0.8);
    z(kEV) = 1.0;
    const ControlVec u(0.3 * U(rng), 0.2 * U(rng));
    ArrivalCost a = initial_arrival_cost(z, cfg);
    a.sqrt_weight *= 1.0 + std::abs(U(rng));
    MeasSample with, without;
    with.mask = static_cast<std::uint8_t>(rng() & 0x3F) | 1u;
    without.mask = 0;
    const EstMat Pw = covariance(update_arrival_cost(a, with, z, u, z, cfg));
    const EstMat Pn = covariance(update_arrival_cost(a, without, z, u, z, cfg));
    const Eigen::SelfAdjointEigenSolver<EstMat> es(0.5 * (Pn - Pw + (Pn - Pw).transpose()));
    CHECK(es.eigenvalues().minCoeff() > -1e-9 * Pn.norm());
  }
}

TEST_CASE("arrival update without measurement is a pure prediction") {
  MheConfig cfg;
  const EstVec z = SyntheticData().prior();
  const ControlVec u(0.1, -0.05);
  const ArrivalCost a = initial_arrival_cost(z, cfg);
  MeasSample none;
  none.mask = 0;
  const ArrivalCost b = update_arrival_cost(a, none, z, u, z, cfg);
  const EstMat A = step_jacobians(z, u, cfg.geom, cfg.dt, nullptr, cfg.hitch_model).d_state;
  const EstMat Q = cfg.sigma_process.cwiseAbs2().asDiagonal();
  const EstMat expect = A * covariance(a) * A.transpose() + Q;
  CHECK((covariance(b) - expect).cwiseAbs().maxCoeff() < 1e-9 * expect.cwiseAbs().maxCoeff());
  CHECK_FALSE(b.rank_deficient);
  // factor stays upper triangular with a positive diagonal
  CHECK(b.sqrt_weight.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm() == 0.0);
  CHECK(b.sqrt_weight.diagonal().minCoeff() > 0.0);
}

TEST_CASE("window length stays at M as samples arrive") {
  MheConfig cfg;
  cfg.M = 5;
  MovingHorizonEstimator mhe(cfg);
  SyntheticData d;
  mhe.initialize(d.prior());
  for (int k = 0; k < 12; ++k) {
    mhe.add_sample(d.sample());
    CHECK(mhe.window().size() == std::min(k + 1, 5));
    CHECK(mhe.nodes().size() == mhe.window().size());
    CHECK(mhe.controls().size() + 1 == mhe.nodes().size());
    mhe.estimate();
    d.advance();
    mhe.prepare();
  }
  // the last prepare() already absorbed sample 7
  CHECK(mhe.window().front().t == doctest::Approx(0.2 * 8));
}

TEST_CASE("estimator sequencing errors") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  mhe.initialize(d.prior());
  CHECK_THROWS_AS(mhe.estimate(), ConfigError);
  mhe.add_sample(d.sample());
  mhe.estimate();
  MeasSample late = d.sample();
  late.t += 0.5;
  CHECK_THROWS_AS(mhe.add_sample(late), TimestampError);
}

TEST_CASE("zero information: estimate is the pure prediction of the prior") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  EstVec prior = d.prior();
  prior(kEV) = 1.3;
  prior(kEMu) = 0.9;
  mhe.initialize(prior);
  EstVec pred = prior;
  for (int k = 0; k < 8; ++k) {
    MeasSample s = d.sample();
    s.mask = 0;
    mhe.add_sample(s);
    const MheEstimate e = mhe.estimate();
    CHECK((e.z_hat.vec() - pred).cwiseAbs().maxCoeff() < 1e-9);
    pred = rk4_step(pred, ControlVec::Zero(), kGeom, 0.2, HitchModel::kKinematic);
    d.advance();
    mhe.prepare();
  }
}

TEST_CASE("a fully masked sample only adds a prediction step") {
  SyntheticData d;
  d.noise = 1.0;
  MovingHorizonEstimator a{MheConfig{}};
  a.initialize(d.prior());
  for (int k = 0; k < 10; ++k) step(a, d);
  a.add_sample(d.sample());
  a.estimate();
  d.advance();

  MovingHorizonEstimator b = a;
  b.estimate();  // one more iteration on the same window

  a.prepare();
  MeasSample masked = d.sample();
  masked.mask = 0;
  a.add_sample(masked);
  const MheEstimate ea = a.estimate();

  // the unmeasured interval is predicted with the last measured steering,
  // which also shifts the hitch angle by the trailer steering change
  const MeasSample& last = b.window().back();
  const ControlVec u_next(last.u.delta_t, last.u.delta_i);
  EstVec z = b.nodes().back();
  z(kEBeta) -= u_next(1) - b.controls().back()(1);
  const EstVec expect = rk4_step(z, u_next, kGeom, 0.2, HitchModel::kKinematic);
  CHECK((ea.z_hat.vec() - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("noiseless model data: slips recovered") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  mhe.initialize(d.prior());
  MheEstimate e;
  for (int k = 0; k < 200; ++k) e = step(mhe, d);
  CHECK(slip_error(e.slip, d.slip) < 1e-3);
  CHECK(std::abs(e.z_hat.v - d.v) < 1e-3);
}

TEST_CASE("noiseless frozen window: repeated iterations reach a KKT point") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  mhe.initialize(d.prior());
  for (int k = 0; k < 40; ++k) step(mhe, d);
  mhe.add_sample(d.sample());
  double kkt = 1.0;
  for (int it = 0; it < 10 && kkt >= 1e-6; ++it) {
    mhe.estimate();
    kkt = mhe.kkt_residual();
  }
  CHECK(kkt < 1e-6);
}

TEST_CASE("slip below the lower bound clamps at exactly 0.25") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  d.slip.kappa = 0.1;
  mhe.initialize(d.prior());
  MheEstimate e;
  for (int k = 0; k < 150; ++k) {
    e = step(mhe, d);
    CHECK(e.slip.kappa >= 0.25);
    CHECK(e.slip.mu >= 0.25);
    CHECK(e.slip.eta >= 0.25);
    CHECK(e.slip.mu <= 1.0);
  }
  CHECK(e.slip.kappa == 0.25);
  CHECK(e.stats.kappa_clamped);
}

TEST_CASE("noisy model data: positions smoothed below the sensor noise") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  d.noise = 1.0;
  mhe.initialize(d.prior());
  double se = 0.0;
  int n = 0;
  for (int k = 0; k < 300; ++k) {
    const StateVec truth = d.x;
    const MheEstimate e = step(mhe, d);
    if (k >= 20) {
      se += std::pow(e.z_hat.pose.xt - truth(kXt), 2) + std::pow(e.z_hat.pose.yt - truth(kYt), 2) +
            std::pow(e.z_hat.pose.xi - truth(kXi), 2) + std::pow(e.z_hat.pose.yi - truth(kYi), 2);
      n += 4;
    }
  }
  CHECK(std::sqrt(se / n) <= 0.03);
}

TEST_CASE("arrival weight stays bounded over 10000 cycles of constant data") {
  MovingHorizonEstimator mhe{MheConfig{}};
  SyntheticData d;
  d.v = 0.0;
  mhe.initialize(d.prior());
  EstMat first;
  double worst_ratio = 0.0;
  for (int k = 0; k < 10000; ++k) {
    MeasSample s = d.sample();
    s.t = 0.2 * k;
    mhe.add_sample(s);
    mhe.estimate();
    mhe.prepare();
    if (k == 20) first = mhe.arrival().sqrt_weight;  // after the first absorbed sample
    if (k > 20) {
      const EstMat& L = mhe.arrival().sqrt_weight;
      for (int i = 0; i < kEstDim; ++i) {
        for (int j = i; j < kEstDim; ++j) {
          // off-diagonal entries are bounded by the initial diagonal scale
          const double ref = std::max(std::abs(first(i, j)), std::abs(first(i, i)));
          worst_ratio = std::max(worst_ratio, std::abs(L(i, j)) / ref);
        }
      }
    }
  }
  CHECK(worst_ratio < 10.0);
  CHECK(mhe.arrival().sqrt_weight.allFinite());
}
