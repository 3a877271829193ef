// Config and log schemas plus the sim / replay / observability commands.
//
// CSV schemas (timestamps in seconds, 9 decimal places, values %.17g):
//   imu.csv       t,wx,wy,wz,ax,ay,az
//   contacts.csv  t,contact_id,active,alpha0..2,alpha_dot0..2
//   camera.csv    t,vx,vy,vz,wx,wy,wz
//   truth.csv     t,qw,qx,qy,qz,vx,vy,vz,px,py,pz
//   estimates.csv one row per update tick (state, P diagonal, chi2, gate)

#ifndef INEKF_IO_HPP
#define INEKF_IO_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "inekf/simulator.hpp"

namespace inekf {

/// Malformed header, column count or unparsable field. Exit code 1.
struct SchemaError : std::runtime_error {
  SchemaError(const std::string& what, int line_number)
      : std::runtime_error(what), line(line_number) {}
  int line;
};

/// Decreasing timestamp within a log file. Exit code 2.
struct TimestampRegression : std::runtime_error {
  TimestampRegression(const std::string& what, int line_number)
      : std::runtime_error(what), line(line_number) {}
  int line;
};

/// @brief Parsed configuration file contents.
struct AppConfig {
  FilterConfig filter;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  std::optional<Vector21d> init_error;       // estimate = retract(truth0, e)
  std::optional<RobotState> initial_state;   // explicit initial estimate
  std::optional<ScenarioConfig> scenario;
  bool compare_camera_off = false;
};

/// Flag overrides applied on top of the config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> imu_rate;
  std::optional<double> contact_rate;
  std::optional<double> camera_rate;
  std::optional<double> gate_rho;
  std::optional<int> tuner_window;
};

[[nodiscard]] AppConfig loadConfig(const std::string& path);
void applyOverrides(AppConfig& config, const CliOverrides& overrides);

// timestamp convention: 9-decimal seconds = integer nanoseconds
[[nodiscard]] std::string formatTimestamp(double t);
[[nodiscard]] double parseTimestamp(const std::string& field, int line);

void writeImuCsv(const std::string& path, const std::vector<ImuSample>& v);
void writeContactsCsv(const std::string& path,
                      const std::vector<ContactKinematicSample>& v);
void writeCameraCsv(const std::string& path,
                    const std::vector<CameraVelocitySample>& v);
void writeTruthCsv(const std::string& path, const TruthTimeline& timeline);
void writeEstimatesCsv(const std::string& path,
                       const std::vector<EstimateRecord>& v);

[[nodiscard]] std::vector<ImuSample> readImuCsv(const std::string& path);
[[nodiscard]] std::vector<ContactKinematicSample> readContactsCsv(
    const std::string& path);
[[nodiscard]] std::vector<CameraVelocitySample> readCameraCsv(
    const std::string& path);

struct TruthRow {
  double t = 0.0;
  SE23 pose;
};
[[nodiscard]] std::vector<TruthRow> readTruthCsv(const std::string& path);
[[nodiscard]] std::vector<EstimateRecord> readEstimatesCsv(
    const std::string& path);

/// Run a scenario, write the log bundle, estimates and metrics.
/// Returns 0 on success, 1 on a malformed config, 2 when the filter
/// reported divergence.
int cmdSim(const std::string& config_path, const std::string& out_dir,
           const CliOverrides& overrides = {});

/// Event-ordered filter pass over an existing log bundle. Returns 0 on
/// success, 1 on a schema violation, 2 on a timestamp regression.
int cmdReplay(const std::string& log_dir, const std::string& config_path,
              const std::string& out_dir, const CliOverrides& overrides = {});

/// Observability analysis for a canned motion case
/// ("dynamic" | "static" | "zero-omega-moving"); writes a JSON report to
/// `output_path`, or stdout when empty. Returns 0, or 1 on a bad case.
int cmdObservability(const std::string& case_name,
                     const std::string& output_path,
                     const CliOverrides& overrides = {});

}  // namespace inekf

#endif  // INEKF_IO_HPP
