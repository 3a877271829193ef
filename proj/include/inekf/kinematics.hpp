// Contact-velocity right-invariant observation built from encoder data via
// a pluggable leg-kinematics model, plus the 3-DOF toy leg used by the
// tests and the simulator.

#ifndef INEKF_KINEMATICS_HPP
#define INEKF_KINEMATICS_HPP

#include <Eigen/Core>

#include "inekf/lie.hpp"

namespace inekf {

/// @brief Abstract leg kinematics: contact-point position in the robot
/// frame and its joint Jacobian. Implementations must be stateless.
class LegModel {
 public:
  virtual ~LegModel() = default;
  [[nodiscard]] virtual int jointCount() const = 0;
  /// Contact-point position r(alpha) in the robot frame [m].
  [[nodiscard]] virtual Eigen::Vector3d forward(
      const Eigen::VectorXd& alpha) const = 0;
  /// 3 x jointCount() Jacobian dr/dalpha [m/rad].
  [[nodiscard]] virtual Eigen::MatrixXd jacobian(
      const Eigen::VectorXd& alpha) const = 0;
};

/// @brief One encoder reading for one contact, with the gyro sample taken
/// at the same instant.
struct ContactKinematicSample {
  double timestamp = 0.0;  // s
  int contact_id = 0;
  Eigen::VectorXd alpha;      // joint angles, rad
  Eigen::VectorXd alpha_dot;  // joint rates, rad/s
  Eigen::Vector3d omega_tilde = Eigen::Vector3d::Zero();  // gyro, rad/s
  bool contact_active = false;
};

/// @brief Right-invariant observation y = chi^-1 b + s with
/// y = [-(J a_dot + w^x r)^T, -1, 0]^T and b = [0, 0, 0, -1, 0]^T.
struct KinematicObservation {
  Eigen::Vector3d y_vel = Eigen::Vector3d::Zero();  // top 3 of y, m/s

  [[nodiscard]] Eigen::Matrix<double, 5, 1> y() const {
    Eigen::Matrix<double, 5, 1> out;
    out << y_vel, -1.0, 0.0;
    return out;
  }
  [[nodiscard]] static Eigen::Matrix<double, 5, 1> b() {
    Eigen::Matrix<double, 5, 1> out;
    out << 0.0, 0.0, 0.0, -1.0, 0.0;
    return out;
  }
};

/// @brief Form the contact-velocity observation from encoders and gyro:
/// y_vel = -(J(alpha) alpha_dot + omega_tilde^x r(alpha)).
/// The gyro is used biased, as measured; its bias is absorbed into the
/// contact measurement noise. Throws on inactive contact or non-finite
/// encoder values.
[[nodiscard]] KinematicObservation contactVelocityObs(
    const ContactKinematicSample& sample, const LegModel& model);

/// @brief 3-DOF serial leg: hip yaw about z, hip pitch and knee pitch about
/// the yawed y axis; hip mount at (0.2, 0, 0) m, thigh and shank 0.4 m.
/// Joint limits |alpha_i| <= pi/2.
class ToyLeg final : public LegModel {
 public:
  static constexpr double kMountX = 0.2;
  static constexpr double kThigh = 0.4;
  static constexpr double kShank = 0.4;
  static constexpr double kJointLimit = M_PI / 2.0;

  [[nodiscard]] int jointCount() const override { return 3; }
  [[nodiscard]] Eigen::Vector3d forward(
      const Eigen::VectorXd& alpha) const override;
  [[nodiscard]] Eigen::MatrixXd jacobian(
      const Eigen::VectorXd& alpha) const override;

  /// Closed-form inverse kinematics (knee-positive branch). Throws when the
  /// target is out of reach or violates joint limits.
  [[nodiscard]] Eigen::Vector3d inverse(const Eigen::Vector3d& foot) const;

  /// Largest reachable hip-to-foot distance (thigh + shank).
  [[nodiscard]] static double maxReach() { return kThigh + kShank; }
};

}  // namespace inekf

#endif  // INEKF_KINEMATICS_HPP
