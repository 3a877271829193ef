#include "inekf/observability.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace inekf {

namespace {

constexpr double kFdStep = 1e-5;

// Lie derivatives of the filter's measurement suite along the
// robot-centric flow at one chart point: rows 0-2 of each column hold
// L^k of the camera velocity measurement, rows 3-5 L^k of the
// leg-kinematic velocity measurement (v_bar, available whenever a
// contact is active). The flow
//   R' = R w^x,  v' = -w^x v + a + R^T g,  (biases, extrinsics constant)
// is polynomial in the state, so its Taylor coefficients in t are exact;
// p_bar never feeds a measurement and is skipped. The camera rate
// omega_c is a measured input and is held fixed while the state varies.
Eigen::MatrixXd lieDerivatives(const Vector21d& chart, const ObsInput& input,
                               const Eigen::Vector3d& omega_c, int order,
                               const Eigen::Vector3d& gravity) {
  const RobocentricState s = RobocentricState::fromChart(chart);
  const Eigen::Matrix3d rc = so3Exp(s.phi_c);
  const Eigen::Vector3d omega_bar = input.omega - s.bias_gyro;
  const Eigen::Vector3d accel_bar = input.accel - s.bias_accel;
  const Eigen::Matrix3d w_x = skew(omega_bar);

  Eigen::Matrix3d r_k = so3Exp(s.phi);
  Eigen::Vector3d v_k = s.v_bar;

  Eigen::MatrixXd lie(6, order + 1);
  lie.block<3, 1>(0, 0) =
      rc.transpose() * v_k + omega_c.cross(rc.transpose() * s.p_c);
  lie.block<3, 1>(3, 0) = v_k;

  double factorial = 1.0;
  for (int k = 0; k < order; ++k) {
    const Eigen::Vector3d v_next =
        (-w_x * v_k + (k == 0 ? accel_bar : Eigen::Vector3d::Zero().eval()) +
         r_k.transpose() * gravity) /
        static_cast<double>(k + 1);
    const Eigen::Matrix3d r_next = r_k * w_x / static_cast<double>(k + 1);
    v_k = v_next;
    r_k = r_next;
    factorial *= static_cast<double>(k + 1);
    lie.block<3, 1>(0, k + 1) = factorial * (rc.transpose() * v_k);
    lie.block<3, 1>(3, k + 1) = factorial * v_k;
  }
  return lie;
}

// Predicted camera rate R_c^T (omega - b_w); constant along the flow, so
// only its order-0 gradient carries information.
Eigen::Vector3d ratePrediction(const Vector21d& chart, const ObsInput& input) {
  const RobocentricState s = RobocentricState::fromChart(chart);
  return so3Exp(s.phi_c).transpose() * (input.omega - s.bias_gyro);
}

}  // namespace

std::string caseName(ObservabilityCase c) {
  switch (c) {
    case ObservabilityCase::kDynamic:
      return "dynamic";
    case ObservabilityCase::kOmegaZeroVelZero:
      return "omega_zero_v_zero";
    case ObservabilityCase::kOmegaZeroVelNonzero:
      return "omega_zero_v_nonzero";
  }
  return "unknown";
}

Eigen::MatrixXd continuousObsMatrix(const RobocentricState& state,
                                    const ObsInput& input, int order,
                                    const Eigen::Vector3d& gravity) {
  if (order < 0 || order > 6) {
    throw std::invalid_argument("continuousObsMatrix: order must be in [0, 6]");
  }
  const Vector21d x0 = state.chart();
  // the noiseless camera rate at the evaluation point
  const Eigen::Vector3d omega_c =
      so3Exp(state.phi_c).transpose() * (input.omega - state.bias_gyro);

  // rows per order: camera-velocity gradients, then kinematic-velocity
  // gradients; one camera-rate gradient block closes the stack
  Eigen::MatrixXd obs(6 * (order + 1) + 3, 21);
  for (int j = 0; j < 21; ++j) {
    Vector21d xp = x0, xm = x0;
    xp(j) += kFdStep;
    xm(j) -= kFdStep;
    const Eigen::MatrixXd lp = lieDerivatives(xp, input, omega_c, order, gravity);
    const Eigen::MatrixXd lm = lieDerivatives(xm, input, omega_c, order, gravity);
    for (int k = 0; k <= order; ++k) {
      obs.block<6, 1>(6 * k, j) = (lp.col(k) - lm.col(k)) / (2.0 * kFdStep);
    }
    obs.block<3, 1>(6 * (order + 1), j) =
        (ratePrediction(xp, input) - ratePrediction(xm, input)) /
        (2.0 * kFdStep);
  }
  return obs;
}

Eigen::MatrixXd discreteObsMatrix(
    const std::vector<std::pair<Matrix3x21d, Matrix21d>>& rows) {
  if (rows.empty()) {
    throw std::invalid_argument("discreteObsMatrix: need at least one row");
  }
  Eigen::MatrixXd obs(3 * rows.size(), 21);
  Matrix21d phi_product = Matrix21d::Identity();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    obs.middleRows<3>(3 * static_cast<int>(k)) = rows[k].first * phi_product;
    phi_product = rows[k].second * phi_product;
  }
  return obs;
}

int numericRank(const Eigen::MatrixXd& m, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol * sv(0)) ++rank;
  }
  return rank;
}

Eigen::MatrixXd nullspaceBasis(const Eigen::MatrixXd& m, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const int rank = numericRank(m, tol);
  return svd.matrixV().rightCols(m.cols() - rank);
}

ObservabilityReport classifyCase(const RobocentricState& state,
                                 const ObsInput& input, double tol) {
  constexpr int kOrder = 6;
  const Eigen::MatrixXd obs = continuousObsMatrix(state, input, kOrder);

  ObservabilityReport report;
  report.rows = static_cast<int>(obs.rows());
  report.cols = static_cast<int>(obs.cols());
  report.numeric_rank = numericRank(obs, tol);
  report.camera_block_rank = numericRank(obs.rightCols<6>(), tol);
  report.nullspace = nullspaceBasis(obs, tol);
  report.tolerance = tol;

  const Eigen::Vector3d omega_bar = input.omega - state.bias_gyro;
  const bool omega_zero = omega_bar.norm() < 1e-12;
  const bool vel_zero = state.v_bar.norm() < 1e-12;
  if (omega_zero && vel_zero) {
    report.classified_case = ObservabilityCase::kOmegaZeroVelZero;
  } else if (omega_zero) {
    report.classified_case = ObservabilityCase::kOmegaZeroVelNonzero;
  } else {
    report.classified_case = ObservabilityCase::kDynamic;
  }
  return report;
}

}  // namespace inekf
