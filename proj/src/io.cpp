#include "inekf/io.hpp"

#include <json.hpp>

#include <Eigen/Geometry>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "inekf/observability.hpp"

namespace inekf {

namespace {

using nlohmann::json;

std::string formatValue(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parseValue(const std::string& field, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &pos);
  } catch (const std::exception&) {
    throw SchemaError("unparsable numeric field '" + field + "' at line " +
                          std::to_string(line),
                      line);
  }
  if (pos != field.size()) {
    throw SchemaError("trailing characters in field '" + field + "' at line " +
                          std::to_string(line),
                      line);
  }
  return v;
}

std::vector<std::string> splitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

/// Reads one CSV file: validates the header, per-row column count and
/// timestamp monotonicity, then hands rows to `consume`.
template <typename RowFn>
void readCsv(const std::string& path, const std::string& expected_header,
             RowFn&& consume) {
  std::ifstream in(path);
  if (!in) {
    throw SchemaError("cannot open '" + path + "'", 0);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("empty file '" + path + "'", 1);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    throw SchemaError("bad header in '" + path + "': expected '" +
                          expected_header + "'",
                      1);
  }
  const std::size_t n_cols = splitCsv(expected_header).size();
  int line_no = 1;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = splitCsv(line);
    if (fields.size() != n_cols) {
      throw SchemaError("expected " + std::to_string(n_cols) +
                            " columns, got " + std::to_string(fields.size()) +
                            " at line " + std::to_string(line_no),
                        line_no);
    }
    const double t = parseTimestamp(fields[0], line_no);
    if (t < prev_t) {
      throw TimestampRegression(
          "timestamp regression at line " + std::to_string(line_no), line_no);
    }
    prev_t = t;
    consume(fields, t, line_no);
  }
}

Eigen::Vector3d vec3FromJson(const json& j, const std::string& key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw std::runtime_error("config: '" + key + "' must be a 3-array");
  }
  return Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(),
                         a[2].get<double>());
}

Eigen::Matrix3d rotationFromQuatJson(const json& a, const std::string& key) {
  if (!a.is_array() || a.size() != 4) {
    throw std::runtime_error("config: '" + key + "' must be [w,x,y,z]");
  }
  Eigen::Quaterniond q(a[0].get<double>(), a[1].get<double>(),
                       a[2].get<double>(), a[3].get<double>());
  if (q.norm() < 1e-9) {
    throw std::runtime_error("config: '" + key + "' is degenerate");
  }
  return q.normalized().toRotationMatrix();
}

Eigen::Matrix3d isoCov(double std_dev) {
  return std_dev * std_dev * Eigen::Matrix3d::Identity();
}

void parseNoise(const json& j, NoiseConfig& noise) {
  if (j.contains("gyro_std")) noise.cov_gyro = isoCov(j["gyro_std"]);
  if (j.contains("accel_std")) noise.cov_accel = isoCov(j["accel_std"]);
  if (j.contains("gyro_bias_walk_std"))
    noise.cov_gyro_bias_walk = isoCov(j["gyro_bias_walk_std"]);
  if (j.contains("accel_bias_walk_std"))
    noise.cov_accel_bias_walk = isoCov(j["accel_bias_walk_std"]);
  if (j.contains("cam_rot_walk_std"))
    noise.cov_cam_rot_walk = isoCov(j["cam_rot_walk_std"]);
  if (j.contains("cam_pos_walk_std"))
    noise.cov_cam_pos_walk = isoCov(j["cam_pos_walk_std"]);
  if (j.contains("contact_std")) noise.cov_contact = isoCov(j["contact_std"]);
  if (j.contains("cam_vel_std")) noise.cov_cam_vel = isoCov(j["cam_vel_std"]);
  if (j.contains("cam_gyro_std"))
    noise.cov_cam_gyro = isoCov(j["cam_gyro_std"]);
  if (j.contains("gravity")) noise.gravity = vec3FromJson(j, "gravity");
}

json metricsToJson(const MetricsReport& m) {
  json j;
  j["velocity_rmse"] = {m.velocity_rmse.x(), m.velocity_rmse.y(),
                        m.velocity_rmse.z()};
  j["velocity_rmse_norm"] = m.velocity_rmse_norm;
  j["orientation_rmse"] = {m.orientation_rmse.x(), m.orientation_rmse.y(),
                           m.orientation_rmse.z()};
  j["horizontal_drift_fraction"] = m.horizontal_drift_fraction;
  j["vertical_drift_m"] = m.vertical_drift;
  j["extrinsic_rot_error_final_rad"] = m.extrinsic_rot_error_final;
  j["extrinsic_pos_error_final_m"] = m.extrinsic_pos_error_final;
  j["extrinsic_coverage_3sigma"] = m.extrinsic_coverage_3sigma;
  j["avg_nees_observable"] = m.avg_nees_observable;
  j["max_innovation"] = m.max_innovation;
  j["horizontal_path_length_m"] = m.horizontal_path_length;
  j["duration_s"] = m.duration;
  j["diverged"] = m.diverged;
  return j;
}

void appendQuat(std::string& out, const Eigen::Matrix3d& r) {
  const Eigen::Quaterniond q(r);
  out += ',' + formatValue(q.w()) + ',' + formatValue(q.x()) + ',' +
         formatValue(q.y()) + ',' + formatValue(q.z());
}

void appendVec3(std::string& out, const Eigen::Vector3d& v) {
  out += ',' + formatValue(v.x()) + ',' + formatValue(v.y()) + ',' +
         formatValue(v.z());
}

}  // namespace

std::string formatTimestamp(double t) {
  const auto ns = static_cast<std::int64_t>(std::llround(t * 1e9));
  char buf[40];
  std::snprintf(buf, sizeof buf, "%" PRId64 ".%09" PRId64, ns / 1000000000,
                ns % 1000000000);
  return buf;
}

double parseTimestamp(const std::string& field, int line) {
  const std::size_t dot = field.find('.');
  const std::string whole = dot == std::string::npos ? field : field.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : field.substr(dot + 1);
  if (frac.size() > 9 || whole.empty()) {
    throw SchemaError("bad timestamp '" + field + "' at line " +
                          std::to_string(line),
                      line);
  }
  frac.resize(9, '0');
  std::int64_t sec = 0, nano = 0;
  try {
    sec = std::stoll(whole);
    nano = std::stoll(frac);
  } catch (const std::exception&) {
    throw SchemaError("bad timestamp '" + field + "' at line " +
                          std::to_string(line),
                      line);
  }
  // same ns -> seconds expression the writers use, for bit-identical replay
  return static_cast<double>(sec * 1000000000 + nano) * 1e-9;
}

AppConfig loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("config parse error: " + std::string(e.what()));
  }

  AppConfig cfg;
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("noise")) parseNoise(j["noise"], cfg.noise);

  if (j.contains("filter")) {
    const json& f = j["filter"];
    if (f.contains("gate_rho")) cfg.filter.gate_rho = f["gate_rho"];
    if (f.contains("tuner_window")) cfg.filter.tuner_window = f["tuner_window"];
    if (f.contains("max_dt")) cfg.filter.max_dt = f["max_dt"];
    if (f.contains("init_std")) {
      const json& s = f["init_std"];
      if (s.contains("rot")) cfg.filter.init_std_rot = s["rot"];
      if (s.contains("vel")) cfg.filter.init_std_vel = s["vel"];
      if (s.contains("pos")) cfg.filter.init_std_pos = s["pos"];
      if (s.contains("gyro_bias")) cfg.filter.init_std_gyro_bias = s["gyro_bias"];
      if (s.contains("accel_bias"))
        cfg.filter.init_std_accel_bias = s["accel_bias"];
      if (s.contains("cam_rot")) cfg.filter.init_std_cam_rot = s["cam_rot"];
      if (s.contains("cam_pos")) cfg.filter.init_std_cam_pos = s["cam_pos"];
    }
    if (f.contains("init_error")) {
      const auto& a = f["init_error"];
      if (!a.is_array() || a.size() != 21) {
        throw std::runtime_error("config: filter.init_error must have 21 entries");
      }
      Vector21d e;
      for (int i = 0; i < 21; ++i) e(i) = a[i].get<double>();
      cfg.init_error = e;
    }
    if (f.contains("initial_state")) {
      const json& s = f["initial_state"];
      RobotState st;
      st.pose.rotation = rotationFromQuatJson(s.at("quat"), "quat");
      st.pose.velocity = vec3FromJson(s, "velocity");
      st.pose.position = vec3FromJson(s, "position");
      if (s.contains("gyro_bias")) st.gyro_bias = vec3FromJson(s, "gyro_bias");
      if (s.contains("accel_bias"))
        st.accel_bias = vec3FromJson(s, "accel_bias");
      if (s.contains("cam_quat"))
        st.cam_rotation = rotationFromQuatJson(s.at("cam_quat"), "cam_quat");
      if (s.contains("cam_position"))
        st.cam_position = vec3FromJson(s, "cam_position");
      cfg.initial_state = st;
    }
  }

  if (j.contains("scenario")) {
    const json& s = j["scenario"];
    ScenarioConfig sc;
    sc.noise = cfg.noise;
    sc.seed = cfg.seed;
    if (s.contains("duration")) sc.duration = s["duration"];
    if (s.contains("gait_period")) sc.gait_period = s["gait_period"];
    if (s.contains("forward_speed")) sc.forward_speed = s["forward_speed"];
    if (s.contains("pelvis_height")) sc.pelvis_height = s["pelvis_height"];
    if (s.contains("bob_amplitude")) sc.bob_amplitude = s["bob_amplitude"];
    if (s.contains("sway_amplitude")) sc.sway_amplitude = s["sway_amplitude"];
    if (s.contains("lateral_offset")) sc.lateral_offset = s["lateral_offset"];
    if (s.contains("yaw_amplitude")) sc.yaw_amplitude = s["yaw_amplitude"];
    if (s.contains("yaw_period")) sc.yaw_period = s["yaw_period"];
    if (s.contains("yaw_rate")) sc.yaw_rate = s["yaw_rate"];
    if (s.contains("pitch_amplitude")) sc.pitch_amplitude = s["pitch_amplitude"];
    if (s.contains("roll_amplitude")) sc.roll_amplitude = s["roll_amplitude"];
    if (s.contains("noise_enabled")) sc.noise_enabled = s["noise_enabled"];
    if (s.contains("imu_rate")) sc.imu_rate = s["imu_rate"];
    if (s.contains("contact_rate")) sc.contact_rate = s["contact_rate"];
    if (s.contains("camera_rate")) sc.camera_rate = s["camera_rate"];
    if (s.contains("truth_rate")) sc.truth_rate = s["truth_rate"];
    if (s.contains("true_gyro_bias"))
      sc.true_gyro_bias = vec3FromJson(s, "true_gyro_bias");
    if (s.contains("true_accel_bias"))
      sc.true_accel_bias = vec3FromJson(s, "true_accel_bias");
    if (s.contains("true_cam_quat"))
      sc.true_cam_rotation =
          rotationFromQuatJson(s.at("true_cam_quat"), "true_cam_quat");
    if (s.contains("true_cam_position"))
      sc.true_cam_position = vec3FromJson(s, "true_cam_position");
    if (s.contains("slip_windows")) {
      for (const auto& w : s["slip_windows"]) {
        SlipWindow win;
        win.t_start = w.at("t_start").get<double>();
        win.t_end = w.at("t_end").get<double>();
        win.velocity = vec3FromJson(w, "velocity");
        sc.slip_windows.push_back(win);
      }
    }
    if (s.contains("compare_camera_off"))
      cfg.compare_camera_off = s["compare_camera_off"];
    cfg.scenario = sc;
  }
  return cfg;
}

void applyOverrides(AppConfig& config, const CliOverrides& overrides) {
  if (overrides.seed) {
    config.seed = *overrides.seed;
    if (config.scenario) config.scenario->seed = *overrides.seed;
  }
  if (config.scenario) {
    if (overrides.imu_rate) config.scenario->imu_rate = *overrides.imu_rate;
    if (overrides.contact_rate)
      config.scenario->contact_rate = *overrides.contact_rate;
    if (overrides.camera_rate)
      config.scenario->camera_rate = *overrides.camera_rate;
  }
  if (overrides.gate_rho) config.filter.gate_rho = *overrides.gate_rho;
  if (overrides.tuner_window)
    config.filter.tuner_window = *overrides.tuner_window;
}

void writeImuCsv(const std::string& path, const std::vector<ImuSample>& v) {
  std::ofstream out(path);
  out << "t,wx,wy,wz,ax,ay,az\n";
  for (const auto& s : v) {
    std::string row = formatTimestamp(s.timestamp);
    appendVec3(row, s.omega_tilde);
    appendVec3(row, s.accel_tilde);
    out << row << '\n';
  }
}

void writeContactsCsv(const std::string& path,
                      const std::vector<ContactKinematicSample>& v) {
  std::ofstream out(path);
  out << "t,contact_id,active,alpha0,alpha1,alpha2,alpha_dot0,alpha_dot1,"
         "alpha_dot2\n";
  for (const auto& s : v) {
    std::string row = formatTimestamp(s.timestamp);
    row += ',' + std::to_string(s.contact_id);
    row += ',' + std::to_string(s.contact_active ? 1 : 0);
    for (int i = 0; i < 3; ++i) row += ',' + formatValue(s.alpha(i));
    for (int i = 0; i < 3; ++i) row += ',' + formatValue(s.alpha_dot(i));
    out << row << '\n';
  }
}

void writeCameraCsv(const std::string& path,
                    const std::vector<CameraVelocitySample>& v) {
  std::ofstream out(path);
  out << "t,vx,vy,vz,wx,wy,wz\n";
  for (const auto& s : v) {
    std::string row = formatTimestamp(s.timestamp);
    appendVec3(row, s.vel_tilde);
    appendVec3(row, s.omega_tilde);
    out << row << '\n';
  }
}

void writeTruthCsv(const std::string& path, const TruthTimeline& timeline) {
  std::ofstream out(path);
  out << "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz\n";
  for (const auto& s : timeline.samples) {
    std::string row = formatTimestamp(s.t);
    appendQuat(row, s.state.rotation());
    appendVec3(row, s.state.velocity());
    appendVec3(row, s.state.position());
    out << row << '\n';
  }
}

void writeEstimatesCsv(const std::string& path,
                       const std::vector<EstimateRecord>& v) {
  std::ofstream out(path);
  out << "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz,bwx,bwy,bwz,bax,bay,baz,"
         "cqw,cqx,cqy,cqz,cpx,cpy,cpz";
  for (int i = 0; i < 21; ++i) out << ",p" << i;
  out << ",chi2,accepted,update\n";
  for (const auto& r : v) {
    std::string row = formatTimestamp(r.t);
    appendQuat(row, r.state.rotation());
    appendVec3(row, r.state.velocity());
    appendVec3(row, r.state.position());
    appendVec3(row, r.state.gyro_bias);
    appendVec3(row, r.state.accel_bias);
    appendQuat(row, r.state.cam_rotation);
    appendVec3(row, r.state.cam_position);
    for (int i = 0; i < 21; ++i) row += ',' + formatValue(r.p_diag(i));
    row += ',' + formatValue(r.chi2);
    row += ',' + std::to_string(r.accepted ? 1 : 0);
    row += ',';
    row += r.update_type;
    out << row << '\n';
  }
}

std::vector<ImuSample> readImuCsv(const std::string& path) {
  std::vector<ImuSample> out;
  readCsv(path, "t,wx,wy,wz,ax,ay,az",
          [&](const std::vector<std::string>& f, double t, int line) {
            ImuSample s;
            s.timestamp = t;
            for (int i = 0; i < 3; ++i) {
              s.omega_tilde(i) = parseValue(f[1 + i], line);
              s.accel_tilde(i) = parseValue(f[4 + i], line);
            }
            out.push_back(s);
          });
  return out;
}

std::vector<ContactKinematicSample> readContactsCsv(const std::string& path) {
  std::vector<ContactKinematicSample> out;
  readCsv(path,
          "t,contact_id,active,alpha0,alpha1,alpha2,alpha_dot0,alpha_dot1,"
          "alpha_dot2",
          [&](const std::vector<std::string>& f, double t, int line) {
            ContactKinematicSample s;
            s.timestamp = t;
            s.contact_id = static_cast<int>(parseValue(f[1], line));
            s.contact_active = parseValue(f[2], line) != 0.0;
            s.alpha.resize(3);
            s.alpha_dot.resize(3);
            for (int i = 0; i < 3; ++i) {
              s.alpha(i) = parseValue(f[3 + i], line);
              s.alpha_dot(i) = parseValue(f[6 + i], line);
            }
            out.push_back(std::move(s));
          });
  return out;
}

std::vector<CameraVelocitySample> readCameraCsv(const std::string& path) {
  std::vector<CameraVelocitySample> out;
  readCsv(path, "t,vx,vy,vz,wx,wy,wz",
          [&](const std::vector<std::string>& f, double t, int line) {
            CameraVelocitySample s;
            s.timestamp = t;
            for (int i = 0; i < 3; ++i) {
              s.vel_tilde(i) = parseValue(f[1 + i], line);
              s.omega_tilde(i) = parseValue(f[4 + i], line);
            }
            out.push_back(s);
          });
  return out;
}

std::vector<TruthRow> readTruthCsv(const std::string& path) {
  std::vector<TruthRow> out;
  readCsv(path, "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz",
          [&](const std::vector<std::string>& f, double t, int line) {
            TruthRow r;
            r.t = t;
            Eigen::Quaterniond q(parseValue(f[1], line), parseValue(f[2], line),
                                 parseValue(f[3], line),
                                 parseValue(f[4], line));
            if (std::abs(q.norm() - 1.0) > 1e-6) {
              throw SchemaError("non-unit quaternion at line " +
                                    std::to_string(line),
                                line);
            }
            r.pose.rotation = q.normalized().toRotationMatrix();
            for (int i = 0; i < 3; ++i) {
              r.pose.velocity(i) = parseValue(f[5 + i], line);
              r.pose.position(i) = parseValue(f[8 + i], line);
            }
            out.push_back(r);
          });
  return out;
}

std::vector<EstimateRecord> readEstimatesCsv(const std::string& path) {
  std::vector<EstimateRecord> out;
  std::string header = "t,qw,qx,qy,qz,vx,vy,vz,px,py,pz,bwx,bwy,bwz,bax,bay,"
                       "baz,cqw,cqx,cqy,cqz,cpx,cpy,cpz";
  for (int i = 0; i < 21; ++i) header += ",p" + std::to_string(i);
  header += ",chi2,accepted,update";
  readCsv(path, header,
          [&](const std::vector<std::string>& f, double t, int line) {
            EstimateRecord r;
            r.t = t;
            auto quatAt = [&](int idx) {
              return Eigen::Quaterniond(
                         parseValue(f[idx], line), parseValue(f[idx + 1], line),
                         parseValue(f[idx + 2], line),
                         parseValue(f[idx + 3], line))
                  .normalized()
                  .toRotationMatrix();
            };
            r.state.pose.rotation = quatAt(1);
            for (int i = 0; i < 3; ++i) {
              r.state.pose.velocity(i) = parseValue(f[5 + i], line);
              r.state.pose.position(i) = parseValue(f[8 + i], line);
              r.state.gyro_bias(i) = parseValue(f[11 + i], line);
              r.state.accel_bias(i) = parseValue(f[14 + i], line);
              r.state.cam_position(i) = parseValue(f[21 + i], line);
            }
            r.state.cam_rotation = quatAt(17);
            for (int i = 0; i < 21; ++i) r.p_diag(i) = parseValue(f[24 + i], line);
            r.chi2 = parseValue(f[45], line);
            r.accepted = parseValue(f[46], line) != 0.0;
            r.update_type = f[47].empty() ? '?' : f[47][0];
            out.push_back(std::move(r));
          });
  return out;
}

int cmdSim(const std::string& config_path, const std::string& out_dir,
           const CliOverrides& overrides) {
  AppConfig cfg;
  try {
    cfg = loadConfig(config_path);
    applyOverrides(cfg, overrides);
    if (!cfg.scenario) {
      throw std::runtime_error("config has no 'scenario' section");
    }
  } catch (const std::exception& e) {
    std::cerr << "sim: " << e.what() << '\n';
    return 1;
  }

  try {
    std::filesystem::create_directories(out_dir);
    const TruthModel truth(*cfg.scenario);
    const SensorLog log = synthesizeSensors(truth);

    ExperimentSetup setup;
    setup.filter_config = cfg.filter;
    setup.filter_noise = cfg.noise;
    if (cfg.init_error) setup.init_error = *cfg.init_error;

    std::vector<EstimateRecord> records;
    const MetricsReport on =
        runExperiment(truth, log, CameraMode::kOn, setup, &records);

    const std::filesystem::path dir(out_dir);
    writeImuCsv((dir / "imu.csv").string(), log.imu);
    writeContactsCsv((dir / "contacts.csv").string(), log.contacts);
    writeCameraCsv((dir / "camera.csv").string(), log.camera);
    writeTruthCsv((dir / "truth.csv").string(), generateTruth(*cfg.scenario));
    writeEstimatesCsv((dir / "estimates.csv").string(), records);

    json metrics;
    metrics["camera_on"] = metricsToJson(on);
    if (cfg.compare_camera_off) {
      const MetricsReport off =
          runExperiment(truth, log, CameraMode::kOff, setup, nullptr);
      metrics["camera_off"] = metricsToJson(off);
    }
    std::ofstream mout(dir / "metrics.json");
    mout << metrics.dump(2) << '\n';

    if (on.diverged) {
      std::cerr << "sim: filter divergence reported\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "sim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmdReplay(const std::string& log_dir, const std::string& config_path,
              const std::string& out_dir, const CliOverrides& overrides) {
  try {
    AppConfig cfg = loadConfig(config_path);
    applyOverrides(cfg, overrides);

    const std::filesystem::path dir(log_dir);
    const std::vector<ImuSample> imu = readImuCsv((dir / "imu.csv").string());
    const std::vector<ContactKinematicSample> contacts =
        readContactsCsv((dir / "contacts.csv").string());

    std::vector<CameraVelocitySample> camera;
    bool degraded = false;
    const auto camera_path = dir / "camera.csv";
    if (std::filesystem::exists(camera_path)) {
      try {
        camera = readCameraCsv(camera_path.string());
      } catch (const TimestampRegression&) {
        throw;
      } catch (const SchemaError& e) {
        std::cerr << "replay: camera.csv unusable (" << e.what()
                  << "), continuing kinematics-only\n";
        camera.clear();
        degraded = true;
      }
    } else {
      degraded = true;
    }
    if (degraded) {
      std::cerr << "replay: running in degraded mode without camera data\n";
    }

    // initial estimate: explicit state wins, otherwise derive from the
    // scenario exactly as `sim` does
    RobotState init;
    std::optional<TruthModel> truth;
    if (cfg.scenario) truth.emplace(*cfg.scenario);
    if (cfg.initial_state) {
      init = *cfg.initial_state;
    } else if (truth) {
      init = retract(truth->stateAt(0.0),
                     cfg.init_error.value_or(Vector21d::Zero()));
    } else {
      throw std::runtime_error(
          "config provides neither filter.initial_state nor a scenario");
    }

    Filter filter(init, cfg.filter.initialCovariance(), cfg.noise, cfg.filter,
                  0.0);
    const std::vector<SensorEvent> events = mergeEvents(imu, contacts, camera);

    // optional scoring against truth.csv
    std::vector<TruthRow> truth_rows;
    const auto truth_path = dir / "truth.csv";
    if (std::filesystem::exists(truth_path)) {
      truth_rows = readTruthCsv(truth_path.string());
    }
    auto lookupTruth = [&](double t) -> const TruthRow* {
      if (truth_rows.empty()) return nullptr;
      auto it = std::lower_bound(
          truth_rows.begin(), truth_rows.end(), t,
          [](const TruthRow& r, double v) { return r.t < v; });
      if (it == truth_rows.end()) return &truth_rows.back();
      if (it != truth_rows.begin() &&
          t - std::prev(it)->t < it->t - t) {
        return &*std::prev(it);
      }
      return &*it;
    };

    const double duration =
        events.empty() ? 0.0 : eventTime(events.back());
    std::optional<MetricsAccumulator> acc;
    if (!truth_rows.empty()) {
      acc.emplace(duration,
                  truth ? truth->horizontalPathLength() : 0.0);
    }

    std::vector<EstimateRecord> records;
    const ToyLeg leg;
    filter.step(events, leg,
                [&](const Filter& f, const SensorEvent& e,
                    const UpdateOutcome* out) {
                  if (out == nullptr) return;
                  EstimateRecord rec;
                  rec.t = f.time();
                  rec.state = f.state();
                  rec.p_diag = f.covariance().diagonal();
                  rec.chi2 = out->chi2;
                  rec.accepted = out->accepted;
                  rec.update_type =
                      std::holds_alternative<CameraVelocitySample>(e) ? 'c'
                                                                      : 'k';
                  records.push_back(rec);

                  if (acc) {
                    const TruthRow* row = lookupTruth(rec.t);
                    if (row != nullptr) {
                      RobotState truth_state;
                      truth_state.pose = row->pose;
                      bool full = false;
                      if (cfg.scenario) {
                        truth_state.gyro_bias = cfg.scenario->true_gyro_bias;
                        truth_state.accel_bias = cfg.scenario->true_accel_bias;
                        truth_state.cam_rotation =
                            cfg.scenario->true_cam_rotation;
                        truth_state.cam_position =
                            cfg.scenario->true_cam_position;
                        full = true;
                      }
                      acc->add(rec.t, f.state(), f.covariance(),
                               out->innovation, truth_state, full);
                    }
                  }
                });

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path odir(out_dir);
    writeEstimatesCsv((odir / "estimates.csv").string(), records);
    if (acc) {
      json metrics;
      metrics["camera_on"] = metricsToJson(acc->finalize());
      if (degraded) metrics["degraded_no_camera"] = true;
      std::ofstream mout(odir / "metrics.json");
      mout << metrics.dump(2) << '\n';
    }
  } catch (const TimestampRegression& e) {
    std::cerr << "replay: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "replay: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "replay: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmdObservability(const std::string& case_name,
                     const std::string& output_path,
                     const CliOverrides& overrides) {
  (void)overrides;
  RobocentricState state;
  ObsInput input;
  state.bias_gyro = Eigen::Vector3d(0.01, -0.005, 0.008);
  state.bias_accel = Eigen::Vector3d(0.05, -0.02, 0.03);
  state.phi_c = Eigen::Vector3d(0.05, -0.1, 0.2);
  state.p_c = Eigen::Vector3d(0.12, 0.03, 0.2);
  state.p_bar = Eigen::Vector3d(1.0, 2.0, 0.5);

  const Eigen::Vector3d gravity(0.0, 0.0, -9.81);
  if (case_name == "dynamic") {
    state.v_bar = Eigen::Vector3d(0.4, 0.1, -0.05);
    input.omega = state.bias_gyro + Eigen::Vector3d(0.3, -0.2, 0.5);
    input.accel = state.bias_accel + Eigen::Vector3d(0.5, 0.1, 9.0);
  } else if (case_name == "static") {
    state.v_bar = Eigen::Vector3d::Zero();
    input.omega = state.bias_gyro;  // omega_bar = 0
    input.accel = state.bias_accel - gravity;  // hover
  } else if (case_name == "zero-omega-moving") {
    state.v_bar = Eigen::Vector3d(1.0, 0.0, 0.0);
    input.omega = state.bias_gyro;
    input.accel = state.bias_accel - gravity;  // steady translation
  } else {
    std::cerr << "observability: unknown case '" << case_name
              << "' (expected dynamic | static | zero-omega-moving)\n";
    return 1;
  }

  const ObservabilityReport report = classifyCase(state, input);
  json j;
  j["case"] = caseName(report.classified_case);
  j["rows"] = report.rows;
  j["cols"] = report.cols;
  j["rank"] = report.numeric_rank;
  j["nullity"] = report.nullity();
  j["camera_block_rank"] = report.camera_block_rank;
  // the rank-loss accounting quoted for the singular cases: the nominal
  // five unobservable directions plus the camera-block rank loss
  j["nullity_camera_accounting"] = 5 + (5 - report.camera_block_rank);
  j["tolerance"] = report.tolerance;
  std::vector<std::vector<double>> basis;
  for (int c = 0; c < report.nullspace.cols(); ++c) {
    std::vector<double> col(21);
    for (int r = 0; r < 21; ++r) col[r] = report.nullspace(r, c);
    basis.push_back(std::move(col));
  }
  j["nullspace_basis"] = basis;

  if (output_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(output_path);
    out << j.dump(2) << '\n';
  }
  return 0;
}

}  // namespace inekf
