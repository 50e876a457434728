#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sphero/controllers.hpp"
#include "sphero/dynamics.hpp"
#include "sphero/mlp.hpp"

namespace sphero {

inline constexpr double kPlantDt = 1e-3;
inline constexpr double kControlPeriod = 0.02;

/// Target profile: piecewise-constant steps or a delayed sinusoid.
struct Profile {
  enum class Kind { Steps, Sinusoid };
  Kind kind = Kind::Steps;
  double initial = 0.0;                          // value before the first step
  std::vector<std::pair<double, double>> steps;  // (time, value), ascending time
  double amplitude = 0.0;
  double omega = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double start = 0.0;  // sinusoid active for t >= start, `initial` before

  double at(double t) const;
  bool continuous() const { return kind == Kind::Sinusoid; }

  static Profile constant(double value);
  static Profile step(double time, double value, double initial = 0.0);
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct GuidanceGains {
  double k_x = 0.5;
  double k_y = 1.0;
  double k_psi = 1.0;
  double phi_max = 0.27;
  double v_max = 1.0;
  double v_floor = 0.1;  // speed used for the lean map when nearly stopped
};

/// Reference path: a circle x = cx + R cos(omega t + phase0), y = cy + R sin(...),
/// or a straight line from (x0, y0) along `heading` at `speed`.
struct TrajectoryRef {
  enum class Kind { Circle, Line };
  Kind kind = Kind::Circle;
  double cx = 4.0;
  double cy = 4.0;
  double radius = 4.0;
  double omega = 0.125;
  double phase0 = -0.5 * 3.14159265358979323846;
  double x0 = 0.0;
  double y0 = 0.0;
  double heading = 0.0;
  double speed = 0.5;
  GuidanceGains gains;

  struct Sample {
    Pose pose;
    double v = 0.0;
    double omega = 0.0;
  };
  Sample at(double t) const;
  Pose initial_pose() const { return at(0.0).pose; }
};

struct GuidanceCommand {
  double v_d = 0.0;
  double phi_d = 0.0;
};

/// Tracking law in the robot frame: speed from the along-track error, turn
/// rate from cross-track and heading errors, lean from tan(phi) = r omega / v.
GuidanceCommand guidance_step(const TrajectoryRef& traj, double t, const Pose& pose, double v,
                              double shell_radius);

/// World pose advanced with psidot = v tan(phi) / r.
Pose integrate_pose(const Pose& pose, double v, double phi, double shell_radius, double dt);

enum class ControllerKind { Mpc, Pid };

struct MetricsConfig {
  double band_fraction = 0.05;
  double band_floor = 1e-3;     // absolute band when the step is near zero
  double tracking_start = 0.0;  // continuous profiles: RMSE window start
};

struct Scenario {
  std::string name = "scenario";
  double duration = 10.0;
  RobotParams robot;
  double mass_perturbation = 0.0;  // fraction, plant only
  FrictionConfig friction;
  double disturbance_torque = 0.0;  // added to tau1 at the plant input
  double disturbance_start = 0.0;
  ControllerKind velocity_controller = ControllerKind::Mpc;
  ControllerKind orientation_controller = ControllerKind::Mpc;
  bool fixed_weights = false;
  bool freeze_eso = false;
  Profile v_profile;
  Profile phi_profile;
  std::optional<TrajectoryRef> trajectory;
  VelocityControllerConfig velocity_mpc;
  OrientationControllerConfig orientation_mpc;
  CascadeGains velocity_pid = default_velocity_pid();
  CascadeGains orientation_pid = default_orientation_pid();
  MetricsConfig metrics;

  void validate() const;

  static CascadeGains default_velocity_pid();
  static CascadeGains default_orientation_pid();
};

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario, std::optional<std::uint64_t> seed = {});
Scenario load_scenario(const std::filesystem::path& path);

/// One control-rate telemetry row; the CSV column order follows the fields.
struct TelemetryRow {
  double t = 0.0;
  double v = 0.0;
  double v_d = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double theta = 0.0;
  double phi = 0.0;
  double phi_d = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double I1 = 0.0;
  double I2 = 0.0;
  int phase = -1;  // PWMPC phase index, -1 when not applicable
};

struct StepMetrics {
  double t_step = 0.0;
  double from = 0.0;
  double to = 0.0;
  std::optional<double> t_r;
  std::optional<double> sigma;
  std::optional<double> t_s;
  double e_rmse = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

struct SignalMetrics {
  std::optional<double> t_r;  // first step
  std::optional<double> sigma;
  std::optional<double> t_s;
  double e_rmse = 0.0;
  std::vector<StepMetrics> steps;
  double rate_min = 0.0;
  double rate_max = 0.0;
  double rate_aa = 0.0;

  bool operator==(const SignalMetrics&) const = default;
};

struct Metrics {
  SignalMetrics velocity;  // v against v_d, rates are thetadot
  SignalMetrics roll;      // phi against phi_d, rates are phidot
  double energy_Q = 0.0;
  double i_aa_1 = 0.0;
  double i_aa_2 = 0.0;

  bool operator==(const Metrics&) const = default;
};

/// Which of the two target columns are continuous profiles.
struct MetricsInput {
  bool v_continuous = false;
  bool phi_continuous = false;
  MetricsConfig config;
};

MetricsInput metrics_input(const Scenario& scenario);

/// Indicators of one tracking signal. A step never reaching 90% leaves
/// t_r, sigma and t_s absent.
StepMetrics step_metrics(const std::vector<double>& t, const std::vector<double>& y,
                         const std::vector<double>& target, std::size_t begin, std::size_t end,
                         double from, const MetricsConfig& config);

/// Computes every indicator from the telemetry columns alone; rates are
/// backward differences of the logged angles.
Metrics compute_metrics(const std::vector<TelemetryRow>& rows, const MetricsInput& input);

struct ScenarioResult {
  Scenario scenario;
  std::uint64_t seed = 0;
  std::vector<TelemetryRow> rows;
  Metrics metrics;
  int flagged_cycles = 0;
  std::vector<Pose> poses;  // world pose per row
  std::optional<double> path_error_max;  // after the first quarter revolution
};

/// Closed-loop run: plant at 1 kHz, controllers at 50 Hz with zero-order hold.
/// The seed drives the lean-model training split and initialization.
ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed);

/// Same as run_scenario with a pre-trained lean model.
ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed, const MLPParams& mlp);

/// Lean model trained on the default grid for this robot.
MLPParams default_beta_model(const RobotParams& robot, std::uint64_t seed);

std::string telemetry_csv(const std::vector<TelemetryRow>& rows);
std::vector<TelemetryRow> parse_telemetry_csv(const std::string& text);
std::string metrics_json(const ScenarioResult& result);

/// Writes <name>.csv, <name>_metrics.json and <name>_scenario.json into `dir`,
/// each through a temporary file and rename. Throws IoError with the path.
void export_results(const ScenarioResult& result, const std::filesystem::path& dir);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace sphero
