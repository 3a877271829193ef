// The invariant filter: error dynamics Jacobians, discretized propagation,
// right-invariant kinematic update with chi-square gating, linearized
// tracking-camera update with Joseph-form covariance, and the online
// empirical-covariance noise tuner.

#ifndef INEKF_FILTER_HPP
#define INEKF_FILTER_HPP

#include <Eigen/Core>
#include <functional>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "inekf/kinematics.hpp"
#include "inekf/state.hpp"

namespace inekf {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix3x21d = Eigen::Matrix<double, 3, 21>;

struct ImuSample {
  double timestamp = 0.0;                                 // s
  Eigen::Vector3d omega_tilde = Eigen::Vector3d::Zero();  // rad/s
  Eigen::Vector3d accel_tilde = Eigen::Vector3d::Zero();  // m/s^2
};

struct CameraVelocitySample {
  double timestamp = 0.0;                                 // s
  Eigen::Vector3d vel_tilde = Eigen::Vector3d::Zero();    // m/s, camera frame
  Eigen::Vector3d omega_tilde = Eigen::Vector3d::Zero();  // rad/s, camera frame
};

using SensorEvent =
    std::variant<ImuSample, ContactKinematicSample, CameraVelocitySample>;

[[nodiscard]] double eventTime(const SensorEvent& e);

/// Merge per-sensor streams into one timeline. Ties are ordered IMU first,
/// then kinematic contacts (ascending contact id), then camera.
[[nodiscard]] std::vector<SensorEvent> mergeEvents(
    const std::vector<ImuSample>& imu,
    const std::vector<ContactKinematicSample>& contacts,
    const std::vector<CameraVelocitySample>& camera);

enum class UpdateStatus { kApplied, kGated, kSingularSkipped };

struct UpdateOutcome {
  bool accepted = false;
  double chi2 = std::numeric_limits<double>::infinity();
  Eigen::Vector3d innovation = Eigen::Vector3d::Zero();
  UpdateStatus status = UpdateStatus::kSingularSkipped;
  RobotState state_posterior;
  Matrix21d p_posterior = Matrix21d::Zero();
};

/// @brief Continuous error-dynamics matrix A. Rows follow the error layout;
/// the bias and extrinsic rows are zero (driven by noise only).
[[nodiscard]] Matrix21d buildA(const RobotState& state,
                               const Eigen::Vector3d& gravity);

/// @brief Process noise Q = B Cov(w) B^T with B = blkdiag(Ad_chi, I12) and
/// Cov(w) the block diagonal of the configured densities; the position slot
/// of w carries no noise of its own.
[[nodiscard]] Matrix21d buildQ(const RobotState& state,
                               const NoiseConfig& noise);

/// @brief State transition Phi = expm(A dt). A is nilpotent (A^4 = 0), so
/// the four-term series is the exact matrix exponential.
[[nodiscard]] Matrix21d buildPhi(const RobotState& state,
                                 const Eigen::Vector3d& gravity, double dt);

/// @brief Observation matrix of the camera velocity measurement, linearized
/// against the invariant error using the measured camera rate.
[[nodiscard]] Matrix3x21d cameraH(const RobotState& state,
                                  const Eigen::Vector3d& omega_c);

/// @brief Measurement covariance of the camera velocity update, propagated
/// through the lever arm and expressed per the filter's convention.
[[nodiscard]] Eigen::Matrix3d cameraNoise(const RobotState& state,
                                          const Eigen::Matrix3d& cov_cam_vel,
                                          const Eigen::Matrix3d& cov_cam_gyro);

/// @brief One filter instance: state, covariance, configuration and the
/// camera noise-tuner window. Single-threaded by design; independent
/// instances are freely copyable and sendable.
class Filter {
 public:
  Filter(const RobotState& initial_state, const Matrix21d& initial_covariance,
         const NoiseConfig& noise, const FilterConfig& config,
         double start_time = 0.0);

  [[nodiscard]] const RobotState& state() const { return state_; }
  [[nodiscard]] const Matrix21d& covariance() const { return covariance_; }
  [[nodiscard]] const NoiseConfig& noise() const { return noise_; }
  [[nodiscard]] const FilterConfig& config() const { return config_; }
  [[nodiscard]] double time() const { return time_; }
  [[nodiscard]] const std::optional<ImuSample>& heldImu() const {
    return held_imu_;
  }

  /// Propagate mean and covariance by one zero-order-hold step.
  /// Requires 0 < dt <= config.max_dt.
  void propagate(const ImuSample& imu, double dt);

  /// Right-invariant contact-velocity update with Mahalanobis gating.
  UpdateOutcome kinematicUpdate(const KinematicObservation& obs);

  /// Linearized camera-velocity update (not gated). Uses the latest tuned
  /// camera covariance when the tuner window has data.
  UpdateOutcome cameraUpdate(const CameraVelocitySample& cam);

  /// Push [omega_c; v_c] into the tuner window and return the empirical
  /// covariance over the window (population form, plus a small PSD floor).
  Matrix6d tuneNoise(const CameraVelocitySample& cam);

  /// Called after every update applied by step(); the outcome pointer is
  /// null for pure IMU events.
  using UpdateCallback =
      std::function<void(const Filter&, const SensorEvent&,
                         const UpdateOutcome*)>;

  /// Event-ordered driver: propagates to each event time with the latest
  /// IMU sample and applies updates in order. Samples must be sorted by
  /// timestamp; an event earlier than the filter clock is rejected.
  /// Inactive contacts are skipped. Gaps longer than max_dt are subdivided.
  void step(const std::vector<SensorEvent>& events, const LegModel& leg,
            const UpdateCallback& callback = {});

 private:
  void advanceTo(double t);
  UpdateOutcome applyLinearUpdate(const Eigen::Vector3d& innovation,
                                  const Matrix3x21d& h,
                                  const Eigen::Matrix3d& n, bool gate);

  RobotState state_;
  Matrix21d covariance_;
  NoiseConfig noise_;
  FilterConfig config_;
  double time_ = 0.0;
  std::optional<ImuSample> held_imu_;

  std::vector<Vector6d> tuner_window_;  // ring buffer, oldest at head_
  std::size_t tuner_head_ = 0;
  std::optional<Matrix6d> tuned_cov_;
};

}  // namespace inekf

#endif  // INEKF_FILTER_HPP
