// Numeric construction of the continuous (Lie-derivative) and discrete
// (local) observability matrices, with rank/nullspace analysis of the
// estimator's observable and unobservable directions.

#ifndef INEKF_OBSERVABILITY_HPP
#define INEKF_OBSERVABILITY_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

#include "inekf/filter.hpp"

namespace inekf {

/// @brief Robot-centric chart, ordered
/// [phi, v_bar, p_bar, b_a, b_w, phi_c, p_c] (b_a before b_w in this
/// chart; the filter's error state orders them the other way).
struct RobocentricState {
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();     // exp coords of R
  Eigen::Vector3d v_bar = Eigen::Vector3d::Zero();   // R^T v, m/s
  Eigen::Vector3d p_bar = Eigen::Vector3d::Zero();   // R^T p, m
  Eigen::Vector3d bias_accel = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_gyro = Eigen::Vector3d::Zero();
  Eigen::Vector3d phi_c = Eigen::Vector3d::Zero();   // exp coords of R_c
  Eigen::Vector3d p_c = Eigen::Vector3d::Zero();     // m

  [[nodiscard]] Vector21d chart() const {
    Vector21d x;
    x << phi, v_bar, p_bar, bias_accel, bias_gyro, phi_c, p_c;
    return x;
  }
  [[nodiscard]] static RobocentricState fromChart(const Vector21d& x) {
    RobocentricState s;
    s.phi = x.segment<3>(0);
    s.v_bar = x.segment<3>(3);
    s.p_bar = x.segment<3>(6);
    s.bias_accel = x.segment<3>(9);
    s.bias_gyro = x.segment<3>(12);
    s.phi_c = x.segment<3>(15);
    s.p_c = x.segment<3>(18);
    return s;
  }
};

/// @brief Raw IMU input held constant for the analysis. The camera rate is
/// taken consistent with the state, omega_c = R_c^T (omega - b_w), as in
/// the noiseless measurement model.
struct ObsInput {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s, body frame
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // m/s^2, body frame
};

enum class ObservabilityCase { kDynamic, kOmegaZeroVelZero, kOmegaZeroVelNonzero };

[[nodiscard]] std::string caseName(ObservabilityCase c);

struct ObservabilityReport {
  int rows = 0;
  int cols = 0;
  int numeric_rank = 0;
  // rank of the camera-pose column block (phi_c, p_c); its drop against
  // the dynamic case is the rank-loss figure quoted for singular motions
  int camera_block_rank = 0;
  Eigen::MatrixXd nullspace;  // orthonormal columns, 21-vectors
  ObservabilityCase classified_case = ObservabilityCase::kDynamic;
  double tolerance = 0.0;

  [[nodiscard]] int nullity() const { return cols - numeric_rank; }
};

/// @brief Observability matrix of the filter's measurement suite: stacked
/// gradients of the Lie derivatives of the camera velocity and the
/// leg-kinematic velocity for orders 0..order, plus one gradient block of
/// the camera rate measurement. Time derivatives come from an exact
/// Taylor recursion of the flow; spatial gradients from central
/// differences (step 1e-5) on the chart. Rows per order: 3 camera rows
/// then 3 kinematic rows; 3 rate rows close the stack.
[[nodiscard]] Eigen::MatrixXd continuousObsMatrix(const RobocentricState& state,
                                                  const ObsInput& input,
                                                  int order,
                                                  const Eigen::Vector3d& gravity =
                                                      Eigen::Vector3d(0, 0, -9.81));

/// @brief Local observability matrix of the discretized filter:
/// rows H_k, H_{k+1} Phi_k, H_{k+2} Phi_{k+1} Phi_k, ...
[[nodiscard]] Eigen::MatrixXd discreteObsMatrix(
    const std::vector<std::pair<Matrix3x21d, Matrix21d>>& rows);

/// @brief Rank as the number of singular values above tol * sigma_max.
[[nodiscard]] int numericRank(const Eigen::MatrixXd& m, double tol = 1e-7);

/// @brief Orthonormal basis of the numeric nullspace (trailing right
/// singular vectors).
[[nodiscard]] Eigen::MatrixXd nullspaceBasis(const Eigen::MatrixXd& m,
                                             double tol = 1e-7);

/// @brief Build the order-6 continuous observability matrix, classify the
/// motion case from (omega, v_bar) and report rank and nullspace.
[[nodiscard]] ObservabilityReport classifyCase(const RobocentricState& state,
                                               const ObsInput& input,
                                               double tol = 1e-7);

}  // namespace inekf

#endif  // INEKF_OBSERVABILITY_HPP
