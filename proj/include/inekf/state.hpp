// Filter state, 21-dimensional error-state layout, noise configuration and
// the retraction applying a correction to the state.
//
// Error vector ordering (every Jacobian in this repo indexes columns
// against it):
//   [ xi_R (0:3) | xi_v (3:6) | xi_p (6:9) | e_bw (9:12) | e_ba (12:15)
//     | xi_Rc (15:18) | e_pc (18:21) ]

#ifndef INEKF_STATE_HPP
#define INEKF_STATE_HPP

#include <Eigen/Core>

#include "inekf/lie.hpp"

namespace inekf {

using Vector21d = Eigen::Matrix<double, 21, 1>;
using Matrix21d = Eigen::Matrix<double, 21, 21>;

/// Column/row offsets of the error-state blocks.
namespace err {
inline constexpr int kRot = 0;
inline constexpr int kVel = 3;
inline constexpr int kPos = 6;
inline constexpr int kBiasGyro = 9;
inline constexpr int kBiasAccel = 12;
inline constexpr int kCamRot = 15;
inline constexpr int kCamPos = 18;
inline constexpr int kDim = 21;
}  // namespace err

/// @brief Full filter state: IMU pose as an SE2(3) element plus IMU biases
/// and the camera extrinsics (R_c, p_c) in the robot frame.
struct RobotState {
  SE23 pose;  // world-frame orientation, velocity [m/s], position [m]
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();   // rad/s
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();  // m/s^2
  Eigen::Matrix3d cam_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d cam_position = Eigen::Vector3d::Zero();  // m

  [[nodiscard]] const Eigen::Matrix3d& rotation() const { return pose.rotation; }
  [[nodiscard]] const Eigen::Vector3d& velocity() const { return pose.velocity; }
  [[nodiscard]] const Eigen::Vector3d& position() const { return pose.position; }
};

/// @brief Covariances of all white-noise terms. Process entries are
/// continuous-time densities (units^2 * s); measurement entries are
/// per-sample covariances (units^2).
struct NoiseConfig {
  Eigen::Matrix3d cov_gyro = 2.5e-5 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_accel = 2.5e-3 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_gyro_bias_walk = 1e-8 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_accel_bias_walk = 1e-6 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_cam_rot_walk = 1e-8 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_cam_pos_walk = 1e-8 * Eigen::Matrix3d::Identity();
  // measurement covariances
  Eigen::Matrix3d cov_contact = 2.25e-4 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_cam_vel = 4e-4 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cov_cam_gyro = 1e-4 * Eigen::Matrix3d::Identity();

  Eigen::Vector3d gravity = Eigen::Vector3d(0.0, 0.0, -9.81);  // m/s^2
};

/// @brief Filter tunables: outlier gate threshold, noise-tuner window and
/// the initial covariance diagonal.
struct FilterConfig {
  double gate_rho = 30.1;  // chi-square rejection threshold
  int tuner_window = 5;    // camera samples in the empirical-covariance window
  double max_dt = 0.05;    // s, longest admissible propagation step

  // Initial covariance: per-block standard deviations. The
  // defaults reflect a known start pose with uncertain extrinsics.
  double init_std_rot = 0.03;       // rad
  double init_std_vel = 0.01;       // m/s
  double init_std_pos = 1e-3;       // m
  double init_std_gyro_bias = 1e-2; // rad/s
  double init_std_accel_bias = 1e-2;// m/s^2
  double init_std_cam_rot = 0.1;    // rad
  double init_std_cam_pos = 0.05;   // m

  [[nodiscard]] Matrix21d initialCovariance() const {
    Vector21d d;
    d.segment<3>(err::kRot).setConstant(init_std_rot * init_std_rot);
    d.segment<3>(err::kVel).setConstant(init_std_vel * init_std_vel);
    d.segment<3>(err::kPos).setConstant(init_std_pos * init_std_pos);
    d.segment<3>(err::kBiasGyro)
        .setConstant(init_std_gyro_bias * init_std_gyro_bias);
    d.segment<3>(err::kBiasAccel)
        .setConstant(init_std_accel_bias * init_std_accel_bias);
    d.segment<3>(err::kCamRot).setConstant(init_std_cam_rot * init_std_cam_rot);
    d.segment<3>(err::kCamPos).setConstant(init_std_cam_pos * init_std_cam_pos);
    return d.asDiagonal();
  }
};

/// @brief (P + P^T) / 2; applied after every propagate and update.
[[nodiscard]] inline Matrix21d symmetrize(const Matrix21d& p) {
  return 0.5 * (p + p.transpose());
}

/// @brief Apply a 21-dim correction: the IMU pose by left multiplication
/// with exp(delta_IMU), the camera rotation by exp(delta_Rc), biases and
/// camera position by vector addition.
[[nodiscard]] inline RobotState retract(const RobotState& state,
                                        const Vector21d& delta) {
  RobotState out = state;
  out.pose = se23Exp(delta.head<9>()) * state.pose;
  out.gyro_bias += delta.segment<3>(err::kBiasGyro);
  out.accel_bias += delta.segment<3>(err::kBiasAccel);
  out.cam_rotation = reorthonormalizeIfNeeded(
      so3Exp(delta.segment<3>(err::kCamRot)) * state.cam_rotation);
  out.cam_position += delta.segment<3>(err::kCamPos);
  return out;
}

/// @brief Error of `estimate` relative to `truth`: the IMU block is the
/// right-invariant error log(chi_hat * chi^-1), the camera rotation block
/// log(Rc_hat * Rc^T), biases and camera position plain differences.
[[nodiscard]] inline Vector21d errorBetween(const RobotState& estimate,
                                            const RobotState& truth) {
  Vector21d xi;
  xi.head<9>() = se23Log(estimate.pose * truth.pose.inverse());
  xi.segment<3>(err::kBiasGyro) = estimate.gyro_bias - truth.gyro_bias;
  xi.segment<3>(err::kBiasAccel) = estimate.accel_bias - truth.accel_bias;
  xi.segment<3>(err::kCamRot) =
      so3Log(estimate.cam_rotation * truth.cam_rotation.transpose());
  xi.segment<3>(err::kCamPos) = estimate.cam_position - truth.cam_position;
  return xi;
}

}  // namespace inekf

#endif  // INEKF_STATE_HPP
