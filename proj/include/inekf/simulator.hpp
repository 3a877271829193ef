// Synthetic biped-like trajectories with contact schedules and injectable
// slip, sensor stream synthesis with configured noise and biases, and
// experiment scoring against ground truth.

#ifndef INEKF_SIMULATOR_HPP
#define INEKF_SIMULATOR_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "inekf/filter.hpp"

namespace inekf {

struct SlipWindow {
  double t_start = 0.0;  // s
  double t_end = 0.0;    // s
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/s, world frame
};

/// @brief Everything that defines one deterministic run: trajectory shape,
/// contact schedule, slip, true sensor imperfections and rates. A fixed
/// seed reproduces all streams bit-identically.
struct ScenarioConfig {
  double duration = 35.0;       // s
  double gait_period = 0.7;     // s, full left-right cycle
  double forward_speed = 0.1;   // m/s
  double pelvis_height = 0.72;  // m
  double bob_amplitude = 0.015;    // m, vertical, at step frequency
  double sway_amplitude = 0.01;    // m, lateral, at gait frequency
  double lateral_offset = 0.1;     // m, foot placement offset from midline
  double yaw_amplitude = 0.2;      // rad
  double yaw_period = 12.0;        // s
  double yaw_rate = 0.0;           // rad/s, steady turn component
  double pitch_amplitude = 0.03;   // rad, at step frequency
  double roll_amplitude = 0.02;    // rad, at gait frequency

  std::vector<SlipWindow> slip_windows;

  Eigen::Vector3d true_gyro_bias = Eigen::Vector3d::Zero();   // rad/s
  Eigen::Vector3d true_accel_bias = Eigen::Vector3d::Zero();  // m/s^2
  Eigen::Matrix3d true_cam_rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d true_cam_position = Eigen::Vector3d(0.1, 0.0, 0.15);  // m

  /// Sensor noise levels used for synthesis (same convention as the filter:
  /// IMU entries are densities, measurement entries per-sample covariances).
  NoiseConfig noise;
  bool noise_enabled = true;

  double imu_rate = 800.0;      // Hz
  double contact_rate = 2000.0; // Hz
  double camera_rate = 200.0;   // Hz
  double truth_rate = 200.0;    // Hz, TruthTimeline sampling

  std::uint64_t seed = 0;
};

/// @brief Analytic ground truth: smooth pelvis motion, alternating
/// single-support schedule with per-segment foot placements, and slip
/// entering through the active contact's world velocity. Validates
/// toy-leg feasibility on construction.
class TruthModel {
 public:
  explicit TruthModel(const ScenarioConfig& config);

  [[nodiscard]] const ScenarioConfig& config() const { return config_; }

  /// Pelvis pose/velocity plus the true biases and extrinsics.
  [[nodiscard]] RobotState stateAt(double t) const;
  [[nodiscard]] Eigen::Matrix3d rotationAt(double t) const;
  [[nodiscard]] Eigen::Vector3d velocityAt(double t) const;
  [[nodiscard]] Eigen::Vector3d positionAt(double t) const;

  [[nodiscard]] int activeContactAt(double t) const;
  [[nodiscard]] bool contactActiveAt(double t, int contact_id) const;
  /// World position / velocity of the active contact point.
  [[nodiscard]] Eigen::Vector3d contactPositionAt(double t) const;
  [[nodiscard]] Eigen::Vector3d contactVelocityAt(double t) const;

  [[nodiscard]] double horizontalPathLength() const;

 private:
  struct Support {
    double t_begin = 0.0;
    double t_end = 0.0;
    int contact_id = 0;
    Eigen::Vector3d foot = Eigen::Vector3d::Zero();  // placement, world
  };
  [[nodiscard]] const Support& supportAt(double t) const;
  [[nodiscard]] Eigen::Vector3d slipDisplacement(const Support& seg,
                                                 double t) const;

  ScenarioConfig config_;
  std::vector<Support> supports_;
};

/// @brief TruthTimeline: ground truth sampled at a fixed rate with
/// per-contact world positions, velocities and schedule flags.
struct TruthSample {
  double t = 0.0;
  RobotState state;
  std::array<Eigen::Vector3d, 2> contact_pos{};
  std::array<Eigen::Vector3d, 2> contact_vel{};
  std::array<bool, 2> contact_active{};
};

struct TruthTimeline {
  double rate = 0.0;
  std::vector<TruthSample> samples;
};

[[nodiscard]] TruthTimeline generateTruth(const ScenarioConfig& config);

/// @brief One sample of the simulated world's ground truth, taken at a
/// measurement tick. The pose follows the same zero-order-hold
/// integration the filter performs, so noiseless streams are exactly
/// model-consistent.
struct TruthTick {
  double t = 0.0;
  SE23 pose;
};

/// @brief All three sensor streams for one scenario, plus the discrete
/// ground truth at every measurement tick.
struct SensorLog {
  std::vector<ImuSample> imu;
  std::vector<ContactKinematicSample> contacts;
  std::vector<CameraVelocitySample> camera;
  std::vector<TruthTick> truth_ticks;
};

/// @brief Synthesize IMU, contact-kinematic and camera streams. IMU values
/// come from inverse discrete dynamics of the analytic trajectory over the
/// nominal sample interval; a discrete-truth replica advanced through the
/// exact event schedule defines the measurements, so the noiseless closed
/// loop is consistent to machine precision. Encoder rates absorb the
/// contact noise so a replay reconstructs the same observation; camera
/// velocity follows the measurement model with the true camera rate.
[[nodiscard]] SensorLog synthesizeSensors(const TruthModel& truth);

enum class CameraMode { kOn, kOff };

struct MetricsReport {
  Eigen::Vector3d velocity_rmse = Eigen::Vector3d::Zero();  // robot frame, m/s
  double velocity_rmse_norm = 0.0;
  Eigen::Vector3d orientation_rmse = Eigen::Vector3d::Zero();  // rad
  double horizontal_drift_fraction = 0.0;  // final error / path length
  double vertical_drift = 0.0;             // m, final
  double extrinsic_rot_error_final = 0.0;  // rad
  double extrinsic_pos_error_final = 0.0;  // m
  double extrinsic_coverage_3sigma = 0.0;  // post-transient fraction
  double avg_nees_observable = 0.0;
  double max_innovation = 0.0;
  double horizontal_path_length = 0.0;     // m
  double duration = 0.0;                   // s
  bool diverged = false;
};

/// @brief One estimate row per update tick.
struct EstimateRecord {
  double t = 0.0;
  RobotState state;
  Vector21d p_diag = Vector21d::Zero();
  double chi2 = 0.0;
  bool accepted = false;
  char update_type = 'k';  // 'k' kinematic, 'c' camera
};

/// @brief How the filter is initialized relative to the truth.
struct ExperimentSetup {
  Vector21d init_error = Vector21d::Zero();  // estimate = retract(truth0, e)
  FilterConfig filter_config;
  std::optional<NoiseConfig> filter_noise;  // defaults to the scenario's
  double transient_fraction = 0.5;  // start of the 3-sigma coverage window
  double divergence_trace = 1e4;
};

/// @brief Shared scorer: feeds per-tick estimate/truth pairs and produces a
/// MetricsReport. With `full_truth` false (pose-only ground truth) the
/// extrinsic and NEES statistics are skipped.
class MetricsAccumulator {
 public:
  MetricsAccumulator(double duration, double horizontal_path_length,
                     double transient_fraction = 0.5,
                     double divergence_trace = 1e4);

  void add(double t, const RobotState& estimate, const Matrix21d& covariance,
           const Eigen::Vector3d& innovation, const RobotState& truth,
           bool full_truth = true);

  [[nodiscard]] MetricsReport finalize() const;

 private:
  double duration_;
  double path_length_;
  double transient_start_;
  double divergence_trace_;
  Eigen::Matrix<double, 17, 21> projector_;
  Eigen::Vector3d sum_sq_vel_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq_rot_ = Eigen::Vector3d::Zero();
  double sum_nees_ = 0.0;
  double max_innovation_ = 0.0;
  std::size_t n_ticks_ = 0;
  std::size_t n_nees_ticks_ = 0;
  std::size_t n_cov_ticks_ = 0;
  std::size_t n_cov_in_ = 0;
  bool diverged_ = false;
  bool have_tick_ = false;
  RobotState last_truth_;
  RobotState last_estimate_;
  bool last_full_truth_ = false;
};

/// @brief Run the full event-ordered filter over synthesized streams and
/// score it against the truth. Deterministic given the scenario seed.
[[nodiscard]] MetricsReport runExperiment(
    const TruthModel& truth, const SensorLog& log, CameraMode mode,
    const ExperimentSetup& setup,
    std::vector<EstimateRecord>* records = nullptr);

/// NEES projector onto the observable subspace: the orthogonal complement
/// of the yaw direction [g; 0] and the absolute-position block.
[[nodiscard]] Eigen::Matrix<double, 17, 21> observableProjector();

}  // namespace inekf

#endif  // INEKF_SIMULATOR_HPP
