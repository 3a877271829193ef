#include "inekf/filter.hpp"

#include <Eigen/Cholesky>
#include <array>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace inekf {

namespace {
constexpr double kConditionLimit = 1e12;
constexpr double kTunerFloor = 1e-8;
}  // namespace

double eventTime(const SensorEvent& e) {
  return std::visit([](const auto& s) { return s.timestamp; }, e);
}

namespace {
int eventRank(const SensorEvent& e) {
  return static_cast<int>(e.index());  // IMU < contact < camera
}
int eventContactId(const SensorEvent& e) {
  if (const auto* c = std::get_if<ContactKinematicSample>(&e)) {
    return c->contact_id;
  }
  return 0;
}
}  // namespace

std::vector<SensorEvent> mergeEvents(
    const std::vector<ImuSample>& imu,
    const std::vector<ContactKinematicSample>& contacts,
    const std::vector<CameraVelocitySample>& camera) {
  std::vector<SensorEvent> events;
  events.reserve(imu.size() + contacts.size() + camera.size());
  for (const auto& s : imu) events.emplace_back(s);
  for (const auto& s : contacts) events.emplace_back(s);
  for (const auto& s : camera) events.emplace_back(s);
  std::stable_sort(events.begin(), events.end(),
                   [](const SensorEvent& a, const SensorEvent& b) {
                     const double ta = eventTime(a), tb = eventTime(b);
                     if (ta != tb) return ta < tb;
                     if (eventRank(a) != eventRank(b))
                       return eventRank(a) < eventRank(b);
                     return eventContactId(a) < eventContactId(b);
                   });
  return events;
}

Matrix21d buildA(const RobotState& state, const Eigen::Vector3d& gravity) {
  const Eigen::Matrix3d& r = state.rotation();
  Matrix21d a = Matrix21d::Zero();
  a.block<3, 3>(err::kVel, err::kRot) = skew(gravity);
  a.block<3, 3>(err::kPos, err::kVel) = Eigen::Matrix3d::Identity();
  a.block<3, 3>(err::kRot, err::kBiasGyro) = -r;
  a.block<3, 3>(err::kVel, err::kBiasGyro) = -skew(state.velocity()) * r;
  a.block<3, 3>(err::kVel, err::kBiasAccel) = -r;
  a.block<3, 3>(err::kPos, err::kBiasGyro) = -skew(state.position()) * r;
  return a;
}

Matrix21d buildQ(const RobotState& state, const NoiseConfig& noise) {
  Eigen::Matrix<double, 9, 9> cov_imu = Eigen::Matrix<double, 9, 9>::Zero();
  cov_imu.block<3, 3>(0, 0) = noise.cov_gyro;
  cov_imu.block<3, 3>(3, 3) = noise.cov_accel;
  // position slot of w is identically zero

  const Matrix9d adj = se23Adjoint(state.pose);
  Matrix21d q = Matrix21d::Zero();
  q.topLeftCorner<9, 9>() = adj * cov_imu * adj.transpose();
  q.block<3, 3>(err::kBiasGyro, err::kBiasGyro) = noise.cov_gyro_bias_walk;
  q.block<3, 3>(err::kBiasAccel, err::kBiasAccel) = noise.cov_accel_bias_walk;
  q.block<3, 3>(err::kCamRot, err::kCamRot) = noise.cov_cam_rot_walk;
  q.block<3, 3>(err::kCamPos, err::kCamPos) = noise.cov_cam_pos_walk;
  return q;
}

namespace {

// Phi - I: eight 3x3 blocks. A^4 = 0 for this error layout, so
// I + A dt + A^2 dt^2/2 + A^3 dt^3/6 is expm(A dt) exactly.
struct PhiBlock {
  int row;
  int col;
  Eigen::Matrix3d m;
};

std::array<PhiBlock, 8> phiBlocks(const RobotState& state,
                                  const Eigen::Vector3d& gravity, double dt) {
  const Eigen::Matrix3d& r = state.rotation();
  const Eigen::Matrix3d g_x = skew(gravity);
  const Eigen::Matrix3d v_x = skew(state.velocity());
  const Eigen::Matrix3d p_x = skew(state.position());
  const double dt2 = dt * dt / 2.0;
  const double dt3 = dt * dt * dt / 6.0;
  return {{
      {err::kVel, err::kRot, g_x * dt},
      {err::kPos, err::kRot, g_x * dt2},
      {err::kPos, err::kVel, dt * Eigen::Matrix3d::Identity()},
      {err::kRot, err::kBiasGyro, -r * dt},
      {err::kVel, err::kBiasGyro, -v_x * r * dt - g_x * r * dt2},
      {err::kVel, err::kBiasAccel, -r * dt},
      {err::kPos, err::kBiasGyro,
       -p_x * r * dt - v_x * r * dt2 - g_x * r * dt3},
      {err::kPos, err::kBiasAccel, -r * dt2},
  }};
}

}  // namespace

Matrix21d buildPhi(const RobotState& state, const Eigen::Vector3d& gravity,
                   double dt) {
  Matrix21d phi = Matrix21d::Identity();
  for (const PhiBlock& b : phiBlocks(state, gravity, dt)) {
    phi.block<3, 3>(b.row, b.col) = b.m;
  }
  return phi;
}

Matrix3x21d cameraH(const RobotState& state, const Eigen::Vector3d& omega_c) {
  const Eigen::Matrix3d rc_t = state.cam_rotation.transpose();
  const Eigen::Matrix3d w_x = skew(omega_c);
  Matrix3x21d h = Matrix3x21d::Zero();
  h.block<3, 3>(0, err::kVel) = rc_t * state.rotation().transpose();
  h.block<3, 3>(0, err::kCamRot) =
      w_x * rc_t * skew(state.cam_position) +
      rc_t * skew(state.rotation().transpose() * state.velocity());
  h.block<3, 3>(0, err::kCamPos) = w_x * rc_t;
  return h;
}

Eigen::Matrix3d cameraNoise(const RobotState& state,
                            const Eigen::Matrix3d& cov_cam_vel,
                            const Eigen::Matrix3d& cov_cam_gyro) {
  const Eigen::Vector3d lever = state.cam_rotation.transpose().eval() *
                                state.cam_position;
  const Eigen::Matrix3d cov_v =
      cov_cam_vel + skew((-lever).eval()) * cov_cam_gyro * skew(lever);
  const Eigen::Matrix3d rot = state.rotation() * state.cam_rotation;
  return rot * cov_v * rot.transpose();
}

Filter::Filter(const RobotState& initial_state,
               const Matrix21d& initial_covariance, const NoiseConfig& noise,
               const FilterConfig& config, double start_time)
    : state_(initial_state),
      covariance_(symmetrize(initial_covariance)),
      noise_(noise),
      config_(config),
      time_(start_time) {
  if (config_.gate_rho <= 0.0) {
    throw std::invalid_argument("Filter: gate threshold must be positive");
  }
  if (config_.tuner_window < 2) {
    throw std::invalid_argument("Filter: tuner window must be >= 2");
  }
  tuner_window_.reserve(static_cast<std::size_t>(config_.tuner_window));
}

void Filter::propagate(const ImuSample& imu, double dt) {
  if (!(dt > 0.0) || dt > config_.max_dt) {
    throw std::invalid_argument("Filter::propagate: dt out of range");
  }

  // Phi (P + Q dt) Phi^T through the sparse Phi = I + N structure:
  // X + NX + (NX)^T + N (NX)^T for symmetric X
  const std::array<PhiBlock, 8> blocks = phiBlocks(state_, noise_.gravity, dt);
  Matrix21d x = covariance_;
  x.noalias() += dt * buildQ(state_, noise_);
  Matrix21d nx = Matrix21d::Zero();
  for (const PhiBlock& b : blocks) {
    nx.middleRows<3>(b.row).noalias() += b.m * x.middleRows<3>(b.col);
  }
  Matrix21d y = x + nx + nx.transpose();
  for (const PhiBlock& b : blocks) {
    y.middleRows<3>(b.row).noalias() +=
        b.m * nx.middleCols<3>(b.col).transpose();
  }
  covariance_ = symmetrize(y);

  const Eigen::Vector3d omega = imu.omega_tilde - state_.gyro_bias;
  const Eigen::Vector3d accel = imu.accel_tilde - state_.accel_bias;
  const Eigen::Matrix3d& r = state_.rotation();
  const Eigen::Vector3d body_accel = r * accel;

  RobotState next = state_;
  next.pose.rotation = reorthonormalizeIfNeeded(r * so3Exp(omega * dt));
  next.pose.velocity += body_accel * dt + noise_.gravity * dt;
  next.pose.position += state_.velocity() * dt +
                        0.5 * body_accel * dt * dt +
                        0.5 * noise_.gravity * dt * dt;
  state_ = next;
  time_ += dt;
}

UpdateOutcome Filter::applyLinearUpdate(const Eigen::Vector3d& innovation,
                                        const Matrix3x21d& h,
                                        const Eigen::Matrix3d& n, bool gate) {
  UpdateOutcome out;
  out.innovation = innovation;

  const Matrix3x21d hp = h * covariance_;  // H P
  const Eigen::Matrix3d s = hp * h.transpose() + n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(s);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) {
    out.status = UpdateStatus::kSingularSkipped;
    out.state_posterior = state_;
    out.p_posterior = covariance_;
    return out;
  }

  const Eigen::LDLT<Eigen::Matrix3d> ldlt(s);
  out.chi2 = innovation.dot(ldlt.solve(innovation));
  if (gate && out.chi2 > config_.gate_rho) {
    out.status = UpdateStatus::kGated;
    out.state_posterior = state_;
    out.p_posterior = covariance_;
    return out;
  }

  const Eigen::Matrix<double, 21, 3> k =
      hp.transpose() * ldlt.solve(Eigen::Matrix3d::Identity());
  const Vector21d delta = -k * innovation;
  state_ = retract(state_, delta);

  // Joseph form (I-KH)P(I-KH)^T + KNK^T expanded through H P, keeping the
  // cost at O(21^2 * 3) per update
  Matrix21d p_post = covariance_;
  p_post.noalias() -= k * hp;                      // (I-KH)P
  const Eigen::Matrix<double, 21, 3> a1_ht = p_post * h.transpose();
  p_post.noalias() -= a1_ht * k.transpose();       // ... (I-KH)^T
  p_post.noalias() += k * n * k.transpose();
  covariance_ = symmetrize(p_post);

  out.accepted = true;
  out.status = UpdateStatus::kApplied;
  out.state_posterior = state_;
  out.p_posterior = covariance_;
  return out;
}

UpdateOutcome Filter::kinematicUpdate(const KinematicObservation& obs) {
  // innovation = Pi (chi y - b), through the full 5x5 product
  const Eigen::Matrix<double, 5, 1> residual =
      state_.pose.matrix() * obs.y() - KinematicObservation::b();
  const Eigen::Vector3d innovation = residual.head<3>();

  Matrix3x21d h = Matrix3x21d::Zero();
  h.block<3, 3>(0, err::kVel) = -Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d n =
      state_.rotation() * noise_.cov_contact * state_.rotation().transpose();
  return applyLinearUpdate(innovation, h, n, /*gate=*/true);
}

UpdateOutcome Filter::cameraUpdate(const CameraVelocitySample& cam) {
  Eigen::Matrix3d cov_vel = noise_.cov_cam_vel;
  Eigen::Matrix3d cov_gyro = noise_.cov_cam_gyro;
  if (tuned_cov_) {
    cov_gyro = tuned_cov_->topLeftCorner<3, 3>();
    cov_vel = tuned_cov_->bottomRightCorner<3, 3>();
  }

  const Eigen::Vector3d predicted =
      state_.cam_rotation.transpose() *
          (state_.rotation().transpose() * state_.velocity()) +
      cam.omega_tilde.cross(state_.cam_rotation.transpose() *
                            state_.cam_position);
  const Eigen::Vector3d innovation = predicted - cam.vel_tilde;
  const Matrix3x21d h = cameraH(state_, cam.omega_tilde);
  const Eigen::Matrix3d n = cameraNoise(state_, cov_vel, cov_gyro);
  return applyLinearUpdate(innovation, h, n, /*gate=*/false);
}

Matrix6d Filter::tuneNoise(const CameraVelocitySample& cam) {
  Vector6d m;
  m << cam.omega_tilde, cam.vel_tilde;
  const auto window = static_cast<std::size_t>(config_.tuner_window);
  if (tuner_window_.size() < window) {
    tuner_window_.push_back(m);
  } else {
    tuner_window_[tuner_head_] = m;
    tuner_head_ = (tuner_head_ + 1) % window;
  }

  Vector6d mean = Vector6d::Zero();
  for (const auto& e : tuner_window_) mean += e;
  mean /= static_cast<double>(tuner_window_.size());

  Matrix6d cov = Matrix6d::Zero();
  for (const auto& e : tuner_window_) {
    const Vector6d d = e - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(tuner_window_.size());
  cov += kTunerFloor * Matrix6d::Identity();
  tuned_cov_ = cov;
  return cov;
}

void Filter::advanceTo(double t) {
  if (t < time_) {
    throw std::runtime_error("Filter::step: non-monotonic timestamp");
  }
  if (t == time_) return;
  if (!held_imu_) {
    // no input to integrate yet; only the clock moves (startup)
    time_ = t;
    return;
  }
  double remaining = t - time_;
  while (remaining > 0.0) {
    const double dt = std::min(remaining, config_.max_dt);
    propagate(*held_imu_, dt);
    remaining = t - time_;
    if (remaining < 1e-12) break;
  }
  time_ = t;
}

void Filter::step(const std::vector<SensorEvent>& events, const LegModel& leg,
                  const UpdateCallback& callback) {
  for (const auto& event : events) {
    const double t = eventTime(event);
    if (t < time_) {
      throw std::runtime_error("Filter::step: non-monotonic timestamp");
    }
    if (const auto* imu = std::get_if<ImuSample>(&event)) {
      if (t > time_) {
        double remaining = t - time_;
        while (remaining > 1e-12) {
          const double dt = std::min(remaining, config_.max_dt);
          propagate(*imu, dt);
          remaining = t - time_;
        }
        time_ = t;
      }
      held_imu_ = *imu;
      if (callback) callback(*this, event, nullptr);
    } else if (const auto* contact =
                   std::get_if<ContactKinematicSample>(&event)) {
      if (!contact->contact_active) continue;
      advanceTo(t);
      ContactKinematicSample sample = *contact;
      if (held_imu_) sample.omega_tilde = held_imu_->omega_tilde;
      const UpdateOutcome outcome =
          kinematicUpdate(contactVelocityObs(sample, leg));
      if (callback) callback(*this, event, &outcome);
    } else if (const auto* cam = std::get_if<CameraVelocitySample>(&event)) {
      advanceTo(t);
      tuneNoise(*cam);
      const UpdateOutcome outcome = cameraUpdate(*cam);
      if (callback) callback(*this, event, &outcome);
    }
  }
}

}  // namespace inekf
