#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sphero/dynamics.hpp"
#include "sphero/eso.hpp"
#include "sphero/linmodel.hpp"
#include "sphero/mlp.hpp"
#include "sphero/qp.hpp"

namespace sphero {

// ---------------------------------------------------------------------------
// PID baseline

struct PIDGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double integral_limit = 1.0;  // bound on the integral contribution, N m
  double output_limit = 10.0;   // N m
};

struct PIDState {
  double integral = 0.0;
  double prev_measurement = 0.0;
  bool initialized = false;
};

struct PIDOutput {
  double output = 0.0;
  PIDState state;
};

/// Positional PID with clamped integral and output; the derivative acts on the
/// measurement so setpoint steps do not kick.
PIDOutput pid_step(const PIDGains& gains, const PIDState& state, double setpoint,
                   double measurement, double dt);

/// Two nested PID loops: the outer loop turns the tracking error into a
/// pendulum-angle setpoint, the inner loop turns the angle error into torque.
struct CascadeGains {
  PIDGains outer;
  PIDGains inner;
};

struct CascadeState {
  PIDState outer;
  PIDState inner;
};

struct CascadeOutput {
  double output = 0.0;
  double inner_setpoint = 0.0;
  CascadeState state;
};

CascadeOutput cascade_step(const CascadeGains& gains, const CascadeState& state, double setpoint,
                           double measurement, double inner_measurement, double dt);

// ---------------------------------------------------------------------------
// ESO-MPC velocity controller

struct VelocityControllerConfig {
  int N_p = 50;
  int N_c = 20;
  Eigen::Vector4d q_diag{150.0, 0.01, 0.0, 5000.0};  // [alpha, alphadot, x, xdot]
  double R = 1e-3;
  std::optional<double> du_max;
  std::vector<double> observer_poles{0.8, 0.8, 0.8, 0.8, 0.8};
  bool freeze_disturbance = false;
};

struct LongitudinalMeasurement {
  double alpha = 0.0;
  double alpha_dot = 0.0;
  double x = 0.0;
  double x_dot = 0.0;
};

struct EsoMpcState {
  ObserverState observer;
  bool initialized = false;
  double last_u = 0.0;
  std::optional<Eigen::VectorXd> warm_start;
  int consecutive_failures = 0;
};

struct ControlOutput {
  double tau = 0.0;
  bool flagged = false;  // solver failure, fail-safe output
};

class EsoMpcController {
 public:
  EsoMpcController(const RobotParams& model_params, const VelocityControllerConfig& config,
                   double T_s, double u_min, double u_max);

  EsoMpcState initial_state() const;

  /// One control period: solve with the current disturbance estimate, then
  /// advance the observer with the chosen input and this cycle's measurement.
  std::pair<ControlOutput, EsoMpcState> step(const EsoMpcState& state, double v_target,
                                             const LongitudinalMeasurement& meas) const;

  /// Steady state (alpha_s, u_s) of the disturbance-corrected model at speed v.
  Eigen::Vector2d steady_target(const Eigen::VectorXd& d_hat, double v) const;

  const LinearModel& model() const { return model_; }
  const AugmentedModel& augmented() const { return aug_; }
  const MPCConfig& mpc_config() const { return mpc_; }

  /// Observer sub-state [alpha, alphadot, xdot]; disturbances on alphadot and xdot.
  static constexpr std::array<int, 3> kObserverStates{0, 1, 3};
  static constexpr std::array<int, 2> kObserverChannels{1, 2};
  static constexpr std::array<int, 2> kModelChannels{1, 3};

 private:
  RobotParams params_;
  VelocityControllerConfig config_;
  double T_s_;
  LinearModel model_;
  AugmentedModel aug_;
  MPCConfig mpc_;
  Eigen::MatrixXd gains_;
};

// ---------------------------------------------------------------------------
// PWMPC orientation controller

enum class Phase { FastResponse = 0, ReduceOvershoot = 1, Stabilization = 2 };

const char* to_string(Phase phase);

struct PhaseThresholds {
  double fraction_remaining = 0.3;
  double band = 0.02;       // rad
  double rate_band = 0.05;  // rad/s
  double hold_time = 0.3;   // s
};

struct PhaseWeights {
  Eigen::Vector4d q_diag;  // [beta, betadot, phi, phidot]
  Eigen::Vector4d p_diag;
  double R = 1.0;
};

/// Episode bookkeeping for the three-phase schedule.
struct PhaseTracker {
  Phase phase = Phase::FastResponse;
  bool started = false;
  double target = 0.0;
  double initial_error = 0.0;
  double t_in_phase = 0.0;
  double in_band_time = 0.0;
};

/// Advances the schedule by dt. A target change larger than `band` restarts
/// the episode in FastResponse; within an episode phases only move forward.
PhaseTracker phase_transition(const PhaseTracker& tracker, const PhaseThresholds& thresholds,
                              double phi, double phi_dot, double phi_d, double dt);

struct OrientationControllerConfig {
  int N_p = 50;
  int N_c = 10;
  std::array<PhaseWeights, 3> weights = default_weights();
  PhaseThresholds thresholds;
  std::optional<double> du_max = 0.5;
  bool fixed_weights = false;  // use FastResponse weights throughout
  bool friction_stiffness = false;

  static std::array<PhaseWeights, 3> default_weights();
};

struct TransverseReference {
  Eigen::Vector4d x_rd = Eigen::Vector4d::Zero();  // [beta_d, 0, phi_d, 0]
  double u_rd = 0.0;
};

/// Reference point from the trained lean model and the inverse transverse model.
TransverseReference transverse_reference(const RobotParams& params, const MLPParams& mlp,
                                         double v, double phi_d, double alpha = 0.0);

/// Input that best zeroes the transverse accelerations at x_rd (least squares
/// over the two rows; exact when x_rd is a true steady state).
double steady_input(const RobotParams& params, const Eigen::Vector4d& x_rd, double v,
                    double alpha = 0.0);

struct PwmpcState {
  PhaseTracker tracker;
  double last_u = 0.0;
  std::optional<Eigen::VectorXd> warm_start;
  int consecutive_failures = 0;
};

class PwmpcController {
 public:
  PwmpcController(const RobotParams& model_params, const OrientationControllerConfig& config,
                  MLPParams mlp, double T_s, double u_min, double u_max);

  PwmpcState initial_state() const { return {}; }

  /// `measured` carries the sensed generalized state (encoders and IMU).
  std::pair<ControlOutput, PwmpcState> step(const PwmpcState& state, double phi_d,
                                            const GeneralizedState& measured) const;

  const OrientationControllerConfig& config() const { return config_; }

 private:
  RobotParams params_;
  OrientationControllerConfig config_;
  MLPParams mlp_;
  double T_s_;
  double u_min_;
  double u_max_;
};

/// Fail-safe policy shared by both MPC controllers: hold the last torque while
/// failures are fewer than five in a row, then command zero.
double fail_safe_output(double last_u, int consecutive_failures);

}  // namespace sphero
