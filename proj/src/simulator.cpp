#include "inekf/simulator.hpp"

#include <Eigen/Cholesky>
#include <array>
#include <algorithm>
#include <unordered_map>
#include <cmath>
#include <stdexcept>

#include "inekf/rng.hpp"

namespace inekf {

namespace {

constexpr double kNsPerSec = 1e9;

/// Shared ns -> seconds conversion; the CSV reader reconstructs timestamps
/// through the same expression so replayed doubles match bit for bit.
double secondsFromNanos(std::int64_t ns) {
  return static_cast<double>(ns) * 1e-9;
}

Eigen::Matrix3d yawRotation(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a), 0.0, 0.0, 0.0,
      1.0;
  return r;
}

Eigen::Matrix3d pitchRotation(double a) {
  Eigen::Matrix3d r;
  r << std::cos(a), 0.0, std::sin(a), 0.0, 1.0, 0.0, -std::sin(a), 0.0,
      std::cos(a);
  return r;
}

Eigen::Matrix3d rollRotation(double a) {
  Eigen::Matrix3d r;
  r << 1.0, 0.0, 0.0, 0.0, std::cos(a), -std::sin(a), 0.0, std::sin(a),
      std::cos(a);
  return r;
}

/// Mean propagation used identically by the filter and by the simulator's
/// discrete truth replica.
SE23 propagateMean(const SE23& x, const Eigen::Vector3d& omega,
                   const Eigen::Vector3d& accel, const Eigen::Vector3d& g,
                   double dt) {
  const Eigen::Vector3d body_accel = x.rotation * accel;
  SE23 out;
  out.rotation = reorthonormalizeIfNeeded(x.rotation * so3Exp(omega * dt));
  out.velocity = x.velocity + body_accel * dt + g * dt;
  out.position = x.position + x.velocity * dt + 0.5 * body_accel * dt * dt +
                 0.5 * g * dt * dt;
  return out;
}

}  // namespace

TruthModel::TruthModel(const ScenarioConfig& config) : config_(config) {
  if (config_.duration <= 0.0 || config_.gait_period <= 0.0) {
    throw std::domain_error("TruthModel: duration and gait period must be positive");
  }
  const double half = 0.5 * config_.gait_period;
  const int n_support =
      static_cast<int>(std::ceil((config_.duration + config_.gait_period) / half));
  supports_.reserve(n_support);
  for (int k = 0; k < n_support; ++k) {
    Support seg;
    seg.t_begin = k * half;
    seg.t_end = (k + 1) * half;
    seg.contact_id = k % 2;
    const double t_mid = 0.5 * (seg.t_begin + seg.t_end);
    const double yaw = config_.yaw_amplitude *
                           std::sin(2.0 * M_PI * t_mid / config_.yaw_period) +
                       config_.yaw_rate * t_mid;
    const double side = seg.contact_id == 0 ? 1.0 : -1.0;
    const Eigen::Vector3d offset =
        yawRotation(yaw) * Eigen::Vector3d(ToyLeg::kMountX,
                                           side * config_.lateral_offset, 0.0);
    const Eigen::Vector3d pelvis = positionAt(t_mid);
    seg.foot = Eigen::Vector3d(pelvis.x() + offset.x(), pelvis.y() + offset.y(), 0.0);
    supports_.push_back(seg);
  }

  // feasibility: every support must stay within toy-leg reach, joint
  // limits, and away from the straight-knee Jacobian singularity
  const ToyLeg leg;
  for (const auto& seg : supports_) {
    if (seg.t_begin > config_.duration) break;
    for (int i = 0; i <= 40; ++i) {
      const double t = seg.t_begin + (seg.t_end - seg.t_begin) * i / 40.0;
      if (t > config_.duration) break;
      const Eigen::Vector3d foot = seg.foot + slipDisplacement(seg, t);
      const Eigen::Vector3d r_body =
          rotationAt(t).transpose() * (foot - positionAt(t));
      Eigen::Vector3d alpha;
      try {
        alpha = leg.inverse(r_body);
      } catch (const std::exception&) {
        throw std::domain_error(
            "TruthModel: infeasible configuration, contact point out of "
            "toy-leg reach or joint limits");
      }
      if (alpha(2) < 0.08) {
        throw std::domain_error(
            "TruthModel: infeasible configuration, knee too close to the "
            "straight-leg singularity");
      }
    }
  }
}

Eigen::Matrix3d TruthModel::rotationAt(double t) const {
  const double wg = 2.0 * M_PI / config_.gait_period;
  const double yaw =
      config_.yaw_amplitude * std::sin(2.0 * M_PI * t / config_.yaw_period) +
      config_.yaw_rate * t;
  const double pitch = config_.pitch_amplitude * std::sin(2.0 * wg * t);
  const double roll = config_.roll_amplitude * std::sin(wg * t);
  return yawRotation(yaw) * pitchRotation(pitch) * rollRotation(roll);
}

Eigen::Vector3d TruthModel::positionAt(double t) const {
  const double wg = 2.0 * M_PI / config_.gait_period;
  return Eigen::Vector3d(
      config_.forward_speed * t,
      config_.sway_amplitude * std::sin(wg * t),
      config_.pelvis_height + config_.bob_amplitude * std::sin(2.0 * wg * t));
}

Eigen::Vector3d TruthModel::velocityAt(double t) const {
  const double wg = 2.0 * M_PI / config_.gait_period;
  return Eigen::Vector3d(
      config_.forward_speed,
      config_.sway_amplitude * wg * std::cos(wg * t),
      config_.bob_amplitude * 2.0 * wg * std::cos(2.0 * wg * t));
}

RobotState TruthModel::stateAt(double t) const {
  RobotState s;
  s.pose = SE23(rotationAt(t), velocityAt(t), positionAt(t));
  s.gyro_bias = config_.true_gyro_bias;
  s.accel_bias = config_.true_accel_bias;
  s.cam_rotation = config_.true_cam_rotation;
  s.cam_position = config_.true_cam_position;
  return s;
}

const TruthModel::Support& TruthModel::supportAt(double t) const {
  const double half = 0.5 * config_.gait_period;
  auto idx = static_cast<std::size_t>(std::max(0.0, t) / half);
  if (idx >= supports_.size()) idx = supports_.size() - 1;
  // guard against floating-point edge at segment boundaries
  if (t < supports_[idx].t_begin && idx > 0) --idx;
  if (t >= supports_[idx].t_end && idx + 1 < supports_.size()) ++idx;
  return supports_[idx];
}

Eigen::Vector3d TruthModel::slipDisplacement(const Support& seg,
                                             double t) const {
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  for (const auto& w : config_.slip_windows) {
    const double lo = std::max(seg.t_begin, w.t_start);
    const double hi = std::min(std::min(t, seg.t_end), w.t_end);
    if (hi > lo) d += w.velocity * (hi - lo);
  }
  return d;
}

int TruthModel::activeContactAt(double t) const {
  return supportAt(t).contact_id;
}

bool TruthModel::contactActiveAt(double t, int contact_id) const {
  return supportAt(t).contact_id == contact_id;
}

Eigen::Vector3d TruthModel::contactPositionAt(double t) const {
  const Support& seg = supportAt(t);
  return seg.foot + slipDisplacement(seg, t);
}

Eigen::Vector3d TruthModel::contactVelocityAt(double t) const {
  for (const auto& w : config_.slip_windows) {
    if (t >= w.t_start && t < w.t_end) return w.velocity;
  }
  return Eigen::Vector3d::Zero();
}

double TruthModel::horizontalPathLength() const {
  const double h = 1e-3;
  double length = 0.0;
  Eigen::Vector3d prev = positionAt(0.0);
  for (double t = h; t <= config_.duration + 0.5 * h; t += h) {
    const Eigen::Vector3d p = positionAt(std::min(t, config_.duration));
    length += (p - prev).head<2>().norm();
    prev = p;
  }
  return length;
}

TruthTimeline generateTruth(const ScenarioConfig& config) {
  const TruthModel model(config);
  TruthTimeline timeline;
  timeline.rate = config.truth_rate;
  const auto period_ns =
      static_cast<std::int64_t>(std::llround(kNsPerSec / config.truth_rate));
  const auto end_ns =
      static_cast<std::int64_t>(std::llround(config.duration * kNsPerSec));
  for (std::int64_t ns = 0; ns <= end_ns; ns += period_ns) {
    const double t = secondsFromNanos(ns);
    TruthSample s;
    s.t = t;
    s.state = model.stateAt(t);
    const int active = model.activeContactAt(t);
    for (int id = 0; id < 2; ++id) {
      s.contact_active[id] = (id == active);
      s.contact_pos[id] = s.contact_active[id] ? model.contactPositionAt(t)
                                               : Eigen::Vector3d::Zero();
      s.contact_vel[id] = s.contact_active[id] ? model.contactVelocityAt(t)
                                               : Eigen::Vector3d::Zero();
    }
    timeline.samples.push_back(std::move(s));
  }
  return timeline;
}

SensorLog synthesizeSensors(const TruthModel& truth) {
  const ScenarioConfig& cfg = truth.config();
  const ToyLeg leg;
  SensorLog log;

  GaussianStream rng_gyro(mixSeed(cfg.seed, 1));
  GaussianStream rng_accel(mixSeed(cfg.seed, 2));
  GaussianStream rng_contact(mixSeed(cfg.seed, 3));
  GaussianStream rng_cam_vel(mixSeed(cfg.seed, 4));
  GaussianStream rng_cam_gyro(mixSeed(cfg.seed, 5));
  const bool noisy = cfg.noise_enabled;
  // IMU densities become per-sample covariances at the sampling rate
  const Eigen::Matrix3d cov_gyro_s = cfg.noise.cov_gyro * cfg.imu_rate;
  const Eigen::Matrix3d cov_accel_s = cfg.noise.cov_accel * cfg.imu_rate;

  struct Tick {
    std::int64_t ns;
    int rank;  // 0 imu, 1 contact, 2 camera
    int id;
  };
  std::vector<Tick> ticks;
  const auto end_ns =
      static_cast<std::int64_t>(std::llround(cfg.duration * kNsPerSec));
  const auto pushTicks = [&](double rate, int rank, int id) {
    const auto period =
        static_cast<std::int64_t>(std::llround(kNsPerSec / rate));
    for (std::int64_t ns = 0; ns <= end_ns; ns += period) {
      ticks.push_back({ns, rank, id});
    }
  };
  pushTicks(cfg.imu_rate, 0, 0);
  pushTicks(cfg.contact_rate, 1, 0);
  pushTicks(cfg.contact_rate, 1, 1);
  pushTicks(cfg.camera_rate, 2, 0);
  std::sort(ticks.begin(), ticks.end(), [](const Tick& a, const Tick& b) {
    if (a.ns != b.ns) return a.ns < b.ns;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.id < b.id;
  });

  const Eigen::Vector3d g = cfg.noise.gravity;
  const auto imu_period_ns =
      static_cast<std::int64_t>(std::llround(kNsPerSec / cfg.imu_rate));
  const double imu_dt = secondsFromNanos(imu_period_ns);

  // Discrete truth replica: advances exactly like the filter's mean so that
  // noiseless streams are model-consistent at every event time. IMU values
  // are computed from the analytic trajectory over the nominal sample
  // interval; the replica, not the analytic curve, is the ground truth the
  // measurements describe.
  SE23 d_state = truth.stateAt(0.0).pose;
  double t_cur = 0.0;
  Eigen::Vector3d held_clean_omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d held_clean_accel = Eigen::Vector3d::Zero();
  Eigen::Vector3d held_measured_omega = Eigen::Vector3d::Zero();
  bool have_imu = false;

  std::array<Eigen::VectorXd, 2> last_alpha;
  for (int id = 0; id < 2; ++id) {
    const double side = id == 0 ? 1.0 : -1.0;
    last_alpha[id] = leg.inverse(Eigen::Vector3d(
        ToyLeg::kMountX, side * cfg.lateral_offset, -cfg.pelvis_height));
  }

  const auto advanceTo = [&](double t) {
    if (t > t_cur && have_imu) {
      d_state = propagateMean(d_state, held_clean_omega, held_clean_accel, g,
                              t - t_cur);
    }
    t_cur = t;
  };

  const auto recordTruth = [&](double t) {
    if (log.truth_ticks.empty() || log.truth_ticks.back().t < t) {
      log.truth_ticks.push_back({t, d_state});
    }
  };

  // replica state captured at the previous IMU tick; the anchor below
  // corrects one interval's worth of zero-order-hold residual at a time,
  // so sample values stay bounded under event interleaving
  SE23 imu_anchor = d_state;
  double imu_anchor_time = 0.0;

  for (const Tick& tick : ticks) {
    const double t = secondsFromNanos(tick.ns);
    if (tick.rank == 0) {
      // inverse discrete dynamics from the replica at the previous IMU
      // tick to the analytic truth at this one
      const double dt_nominal = (t > 0.0) ? t - imu_anchor_time : imu_dt;
      const double t_ref = (t > 0.0) ? t : imu_dt;
      held_clean_omega =
          so3Log(imu_anchor.rotation.transpose() * truth.rotationAt(t_ref)) /
          dt_nominal;
      held_clean_accel =
          imu_anchor.rotation.transpose() *
          ((truth.velocityAt(t_ref) - imu_anchor.velocity) / dt_nominal - g);
      if (t > t_cur) {
        d_state = propagateMean(d_state, held_clean_omega, held_clean_accel,
                                g, t - t_cur);
        t_cur = t;
      }
      imu_anchor = d_state;
      imu_anchor_time = t;
      ImuSample s;
      s.timestamp = t;
      s.omega_tilde = held_clean_omega + cfg.true_gyro_bias;
      s.accel_tilde = held_clean_accel + cfg.true_accel_bias;
      if (noisy) {
        s.omega_tilde += rng_gyro.nextVec3(cov_gyro_s);
        s.accel_tilde += rng_accel.nextVec3(cov_accel_s);
      }
      held_measured_omega = s.omega_tilde;
      have_imu = true;
      log.imu.push_back(s);
    } else if (tick.rank == 1) {
      advanceTo(t);
      recordTruth(t);
      ContactKinematicSample s;
      s.timestamp = t;
      s.contact_id = tick.id;
      s.contact_active = truth.contactActiveAt(t, tick.id);
      if (s.contact_active) {
        const Eigen::Vector3d foot = truth.contactPositionAt(t);
        const Eigen::Vector3d r_body =
            d_state.rotation.transpose() * (foot - d_state.position);
        s.alpha = leg.inverse(r_body);
        Eigen::Vector3d y_des =
            d_state.rotation.transpose() *
            (d_state.velocity - truth.contactVelocityAt(t));
        if (noisy) y_des += rng_contact.nextVec3(cfg.noise.cov_contact);
        // fold the measurement into the encoder rates so a replay of
        // (alpha, alpha_dot) reconstructs exactly this observation
        const Eigen::Vector3d r_fk = leg.forward(s.alpha);
        const Eigen::MatrixXd j = leg.jacobian(s.alpha);
        s.alpha_dot = Eigen::Matrix3d(j).partialPivLu().solve(
            -(y_des + held_measured_omega.cross(r_fk)));
        last_alpha[tick.id] = s.alpha;
      } else {
        s.alpha = last_alpha[tick.id];
        s.alpha_dot = Eigen::VectorXd::Zero(3);
      }
      log.contacts.push_back(std::move(s));
    } else {
      advanceTo(t);
      recordTruth(t);
      const Eigen::Matrix3d rc_t = cfg.true_cam_rotation.transpose();
      const Eigen::Vector3d omega_c_clean = rc_t * held_clean_omega;
      CameraVelocitySample s;
      s.timestamp = t;
      s.vel_tilde = rc_t * (d_state.rotation.transpose() * d_state.velocity) +
                    omega_c_clean.cross(rc_t * cfg.true_cam_position);
      s.omega_tilde = omega_c_clean;
      if (noisy) {
        s.vel_tilde += rng_cam_vel.nextVec3(cfg.noise.cov_cam_vel);
        s.omega_tilde += rng_cam_gyro.nextVec3(cfg.noise.cov_cam_gyro);
      }
      log.camera.push_back(s);
    }
  }
  return log;
}

namespace {

// unobservable directions with z-aligned gravity: yaw (rot z) and the
// absolute position block; the complement is a coordinate selection
constexpr std::array<int, 17> kObservableIdx = {
    0, 1, 3, 4, 5, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};

}  // namespace

Eigen::Matrix<double, 17, 21> observableProjector() {
  Eigen::Matrix<double, 17, 21> proj = Eigen::Matrix<double, 17, 21>::Zero();
  for (int i = 0; i < 17; ++i) proj(i, kObservableIdx[i]) = 1.0;
  return proj;
}

MetricsAccumulator::MetricsAccumulator(double duration,
                                       double horizontal_path_length,
                                       double transient_fraction,
                                       double divergence_trace)
    : duration_(duration),
      path_length_(horizontal_path_length),
      transient_start_(transient_fraction * duration),
      divergence_trace_(divergence_trace),
      projector_(observableProjector()) {}

void MetricsAccumulator::add(double t, const RobotState& estimate,
                             const Matrix21d& covariance,
                             const Eigen::Vector3d& innovation,
                             const RobotState& truth, bool full_truth) {
  const Eigen::Vector3d vel_err =
      estimate.rotation().transpose() * estimate.velocity() -
      truth.rotation().transpose() * truth.velocity();
  sum_sq_vel_ += vel_err.cwiseAbs2();
  sum_sq_rot_ +=
      so3Log(estimate.rotation() * truth.rotation().transpose()).cwiseAbs2();
  max_innovation_ = std::max(max_innovation_, innovation.norm());

  if (full_truth) {
    const Vector21d xi = errorBetween(estimate, truth);
    // coordinate gather is equivalent to projector_ * (.) here and keeps
    // the per-tick cost low
    Eigen::Matrix<double, 17, 1> obs_err;
    Eigen::Matrix<double, 17, 17> obs_cov;
    for (int i = 0; i < 17; ++i) {
      obs_err(i) = xi(kObservableIdx[i]);
      for (int j = 0; j < 17; ++j) {
        obs_cov(i, j) = covariance(kObservableIdx[i], kObservableIdx[j]);
      }
    }
    sum_nees_ += obs_err.dot(obs_cov.ldlt().solve(obs_err));
    ++n_nees_ticks_;

    if (t >= transient_start_) {
      ++n_cov_ticks_;
      bool inside = true;
      const Eigen::Vector3d cam_rot_err =
          so3Log(estimate.cam_rotation * truth.cam_rotation.transpose());
      const Eigen::Vector3d cam_pos_err =
          estimate.cam_position - truth.cam_position;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(cam_rot_err(i)) >
            3.0 * std::sqrt(covariance(err::kCamRot + i, err::kCamRot + i)))
          inside = false;
        if (std::abs(cam_pos_err(i)) >
            3.0 * std::sqrt(covariance(err::kCamPos + i, err::kCamPos + i)))
          inside = false;
      }
      if (inside) ++n_cov_in_;
    }
  }

  if (!covariance.allFinite() || covariance.trace() > divergence_trace_) {
    diverged_ = true;
  }

  ++n_ticks_;
  have_tick_ = true;
  last_truth_ = truth;
  last_estimate_ = estimate;
  last_full_truth_ = full_truth;
}

MetricsReport MetricsAccumulator::finalize() const {
  MetricsReport report;
  report.duration = duration_;
  report.horizontal_path_length = path_length_;
  report.diverged = diverged_;
  report.max_innovation = max_innovation_;
  if (n_ticks_ > 0) {
    report.velocity_rmse =
        (sum_sq_vel_ / static_cast<double>(n_ticks_)).cwiseSqrt();
    report.velocity_rmse_norm =
        std::sqrt(sum_sq_vel_.sum() / static_cast<double>(n_ticks_));
    report.orientation_rmse =
        (sum_sq_rot_ / static_cast<double>(n_ticks_)).cwiseSqrt();
  }
  if (n_nees_ticks_ > 0) {
    report.avg_nees_observable =
        sum_nees_ / static_cast<double>(n_nees_ticks_);
  }
  if (n_cov_ticks_ > 0) {
    report.extrinsic_coverage_3sigma =
        static_cast<double>(n_cov_in_) / static_cast<double>(n_cov_ticks_);
  }
  if (have_tick_) {
    const Eigen::Vector3d final_pos_err =
        last_estimate_.position() - last_truth_.position();
    if (path_length_ > 0.0) {
      report.horizontal_drift_fraction =
          final_pos_err.head<2>().norm() / path_length_;
    }
    report.vertical_drift = std::abs(final_pos_err.z());
    if (last_full_truth_) {
      report.extrinsic_rot_error_final =
          so3Log(last_estimate_.cam_rotation *
                 last_truth_.cam_rotation.transpose())
              .norm();
      report.extrinsic_pos_error_final =
          (last_estimate_.cam_position - last_truth_.cam_position).norm();
    }
  }
  return report;
}

MetricsReport runExperiment(const TruthModel& truth, const SensorLog& log,
                            CameraMode mode, const ExperimentSetup& setup,
                            std::vector<EstimateRecord>* records) {
  const ScenarioConfig& cfg = truth.config();
  const RobotState truth0 = truth.stateAt(0.0);
  const RobotState init = retract(truth0, setup.init_error);
  const NoiseConfig filter_noise = setup.filter_noise.value_or(cfg.noise);
  Filter filter(init, setup.filter_config.initialCovariance(), filter_noise,
                setup.filter_config, 0.0);

  const std::vector<SensorEvent> events =
      mergeEvents(log.imu, log.contacts,
                  mode == CameraMode::kOn ? log.camera
                                          : std::vector<CameraVelocitySample>{});

  const ToyLeg leg;
  MetricsAccumulator acc(cfg.duration, truth.horizontalPathLength(),
                         setup.transient_fraction, setup.divergence_trace);

  // the discrete truth ticks are the ground truth of the simulated world;
  // fall back to the analytic curve for logs that lack them
  std::unordered_map<std::int64_t, const SE23*> truth_at;
  truth_at.reserve(log.truth_ticks.size());
  for (const auto& tick : log.truth_ticks) {
    truth_at.emplace(static_cast<std::int64_t>(std::llround(tick.t * 1e9)),
                     &tick.pose);
  }
  const auto truthState = [&](double t) {
    RobotState s = truth.stateAt(t);
    const auto it =
        truth_at.find(static_cast<std::int64_t>(std::llround(t * 1e9)));
    if (it != truth_at.end()) s.pose = *it->second;
    return s;
  };

  filter.step(events, leg,
              [&](const Filter& f, const SensorEvent& e,
                  const UpdateOutcome* out) {
                if (out == nullptr) return;
                const double t = f.time();
                acc.add(t, f.state(), f.covariance(), out->innovation,
                        truthState(t));
                if (records != nullptr) {
                  EstimateRecord rec;
                  rec.t = t;
                  rec.state = f.state();
                  rec.p_diag = f.covariance().diagonal();
                  rec.chi2 = out->chi2;
                  rec.accepted = out->accepted;
                  rec.update_type =
                      std::holds_alternative<CameraVelocitySample>(e) ? 'c'
                                                                      : 'k';
                  records->push_back(std::move(rec));
                }
              });

  return acc.finalize();
}

}  // namespace inekf
