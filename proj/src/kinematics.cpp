#include "inekf/kinematics.hpp"

#include <cmath>
#include <stdexcept>

namespace inekf {

KinematicObservation contactVelocityObs(const ContactKinematicSample& sample,
                                        const LegModel& model) {
  if (!sample.contact_active) {
    throw std::invalid_argument("contactVelocityObs: contact is not active");
  }
  if (!sample.alpha.allFinite() || !sample.alpha_dot.allFinite() ||
      !sample.omega_tilde.allFinite()) {
    throw std::invalid_argument("contactVelocityObs: non-finite encoder data");
  }
  if (sample.alpha.size() != model.jointCount() ||
      sample.alpha_dot.size() != model.jointCount()) {
    throw std::invalid_argument("contactVelocityObs: joint count mismatch");
  }
  const Eigen::Vector3d r = model.forward(sample.alpha);
  const Eigen::MatrixXd j = model.jacobian(sample.alpha);
  KinematicObservation obs;
  obs.y_vel = -(j * sample.alpha_dot + sample.omega_tilde.cross(r));
  return obs;
}

namespace {

void checkLimits(const Eigen::VectorXd& alpha) {
  if (alpha.size() != 3) {
    throw std::invalid_argument("ToyLeg: expected 3 joint angles");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(alpha(i)) <= ToyLeg::kJointLimit)) {
      throw std::domain_error("ToyLeg: joint limit violated");
    }
  }
}

Eigen::Matrix3d yawRot(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a), 0.0, 0.0, 0.0,
      1.0;
  return r;
}

}  // namespace

Eigen::Vector3d ToyLeg::forward(const Eigen::VectorXd& alpha) const {
  checkLimits(alpha);
  const double yaw = alpha(0), hip = alpha(1), knee = alpha(2);
  // planar 2R chain in the yawed sagittal plane
  const double x = -kThigh * std::sin(hip) - kShank * std::sin(hip + knee);
  const double z = -kThigh * std::cos(hip) - kShank * std::cos(hip + knee);
  return yawRot(yaw) * Eigen::Vector3d(kMountX + x, 0.0, z);
}

Eigen::MatrixXd ToyLeg::jacobian(const Eigen::VectorXd& alpha) const {
  checkLimits(alpha);
  const double yaw = alpha(0), hip = alpha(1), knee = alpha(2);
  const Eigen::Matrix3d rz = yawRot(yaw);
  const Eigen::Vector3d foot = forward(alpha);
  const Eigen::Vector3d hip_pos = rz * Eigen::Vector3d(kMountX, 0.0, 0.0);
  const Eigen::Vector3d knee_pos =
      hip_pos + rz * Eigen::Vector3d(-kThigh * std::sin(hip), 0.0,
                                     -kThigh * std::cos(hip));
  const Eigen::Vector3d pitch_axis = rz * Eigen::Vector3d::UnitY();

  Eigen::MatrixXd j(3, 3);
  j.col(0) = Eigen::Vector3d::UnitZ().cross(foot);
  j.col(1) = pitch_axis.cross(foot - hip_pos);
  j.col(2) = pitch_axis.cross(foot - knee_pos);
  return j;
}

Eigen::Vector3d ToyLeg::inverse(const Eigen::Vector3d& foot) const {
  const double yaw = std::atan2(foot.y(), foot.x());
  const Eigen::Vector3d u =
      yawRot(-yaw) * foot - Eigen::Vector3d(kMountX, 0.0, 0.0);
  const double d2 = u.x() * u.x() + u.z() * u.z();
  const double cos_knee =
      (d2 - kThigh * kThigh - kShank * kShank) / (2.0 * kThigh * kShank);
  if (cos_knee > 1.0 + 1e-9 || cos_knee < -1.0) {
    throw std::domain_error("ToyLeg::inverse: target out of reach");
  }
  const double knee = std::acos(std::clamp(cos_knee, -1.0, 1.0));
  const double hip = std::atan2(-u.x(), -u.z()) -
                     std::atan2(kShank * std::sin(knee),
                                kThigh + kShank * std::cos(knee));
  Eigen::VectorXd alpha(3);
  alpha << yaw, hip, knee;
  checkLimits(alpha);
  return alpha;
}

}  // namespace inekf
