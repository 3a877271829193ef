#include <CLI11.hpp>

#include <cstdio>

#include <optional>
#include <string>

#include "inekf/io.hpp"

namespace {

void addCommonFlags(CLI::App* cmd, inekf::CliOverrides& o) {
  cmd->add_option("--seed", o.seed, "Override the scenario seed");
  cmd->add_option_function<std::string>(
         "--rates",
         [&o](const std::string& v) {
           double imu = 0, contact = 0, camera = 0;
           if (std::sscanf(v.c_str(), "%lf,%lf,%lf", &imu, &contact,
                           &camera) != 3) {
             throw CLI::ValidationError(
                 "--rates expects imu,contact,camera in Hz");
           }
           o.imu_rate = imu;
           o.contact_rate = contact;
           o.camera_rate = camera;
         },
         "Sensor rates as imu,contact,camera Hz (default 800,2000,200)");
  cmd->add_option("--imu-rate", o.imu_rate, "IMU rate, Hz");
  cmd->add_option("--contact-rate", o.contact_rate, "Contact encoder rate, Hz");
  cmd->add_option("--camera-rate", o.camera_rate, "Tracking camera rate, Hz");
  cmd->add_option("--gate-rho", o.gate_rho,
                  "Mahalanobis gate threshold (default 30.1)");
  cmd->add_option("--tuner-window", o.tuner_window,
                  "Camera noise tuner window length (default 5)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Legged-robot state estimator: invariant filtering of IMU, leg "
      "kinematics and tracking-camera velocity, with a deterministic "
      "simulator and observability analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", log_dir, case_name = "dynamic";
  std::string obs_output;
  inekf::CliOverrides overrides;

  CLI::App* sim = app.add_subcommand(
      "sim", "Simulate a scenario, run the filter and write logs + metrics");
  sim->add_option("config", config_path, "Config JSON")->required();
  sim->add_option("-o,--out", out_dir, "Output directory");
  addCommonFlags(sim, overrides);

  CLI::App* replay = app.add_subcommand(
      "replay", "Re-run the filter over an existing log bundle");
  replay->add_option("logs", log_dir, "Directory with imu/contacts/camera csv")
      ->required();
  replay->add_option("config", config_path, "Config JSON")->required();
  replay->add_option("-o,--out", out_dir, "Output directory");
  addCommonFlags(replay, overrides);

  CLI::App* obs = app.add_subcommand(
      "observability", "Rank/nullspace analysis of a canned motion case");
  obs->add_option("--case", case_name,
                  "dynamic | static | zero-omega-moving");
  obs->add_option("-o,--out", obs_output, "Write the JSON report here");
  addCommonFlags(obs, overrides);

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    return inekf::cmdSim(config_path, out_dir, overrides);
  }
  if (replay->parsed()) {
    return inekf::cmdReplay(log_dir, config_path, out_dir, overrides);
  }
  return inekf::cmdObservability(case_name, obs_output, overrides);
}
