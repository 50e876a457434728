#include "sphero/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

constexpr int kFailuresBeforeZero = 5;

Eigen::MatrixXd diag(const Eigen::Vector4d& d) { return d.asDiagonal(); }

// The active-set solution meets its bounds only to solver tolerance; the
// applied torque must meet them exactly.
double limit_input(double u, double u_min, double u_max, std::optional<double> du_max,
                   std::optional<double> previous) {
  if (du_max && previous) u = std::clamp(u, *previous - *du_max, *previous + *du_max);
  return std::clamp(u, u_min, u_max);
}

}  // namespace

// ---------------------------------------------------------------------------
// PID

PIDOutput pid_step(const PIDGains& gains, const PIDState& state, double setpoint,
                   double measurement, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be positive");
  const double error = setpoint - measurement;
  PIDOutput out;
  out.state = state;

  out.state.integral += error * dt;
  if (gains.ki > 0.0) {
    const double bound = gains.integral_limit / gains.ki;
    out.state.integral = std::clamp(out.state.integral, -bound, bound);
  }
  const double derivative =
      state.initialized ? (measurement - state.prev_measurement) / dt : 0.0;
  out.state.prev_measurement = measurement;
  out.state.initialized = true;

  const double u = gains.kp * error + gains.ki * out.state.integral - gains.kd * derivative;
  out.output = std::clamp(u, -gains.output_limit, gains.output_limit);
  return out;
}

CascadeOutput cascade_step(const CascadeGains& gains, const CascadeState& state, double setpoint,
                           double measurement, double inner_measurement, double dt) {
  CascadeOutput out;
  const PIDOutput outer = pid_step(gains.outer, state.outer, setpoint, measurement, dt);
  const PIDOutput inner = pid_step(gains.inner, state.inner, outer.output, inner_measurement, dt);
  out.inner_setpoint = outer.output;
  out.output = inner.output;
  out.state = {outer.state, inner.state};
  return out;
}

double fail_safe_output(double last_u, int consecutive_failures) {
  return consecutive_failures >= kFailuresBeforeZero ? 0.0 : last_u;
}

// ---------------------------------------------------------------------------
// ESO-MPC

EsoMpcController::EsoMpcController(const RobotParams& model_params,
                                   const VelocityControllerConfig& config, double T_s,
                                   double u_min, double u_max)
    : params_(model_params), config_(config), T_s_(T_s) {
  model_ = make_linear_model(params_, Axis::Longitudinal, GeneralizedState{}, T_s_);
  const LinearModel reduced = select_states(model_, kObserverStates);
  const std::array<int, 3> outputs{0, 1, 2};
  aug_ = augment(reduced, kObserverChannels, outputs);
  gains_ = design_gains(aug_, config_.observer_poles, T_s_);

  mpc_.N_p = config_.N_p;
  mpc_.N_c = config_.N_c;
  mpc_.Q = diag(config_.q_diag);
  mpc_.P = mpc_.Q;
  mpc_.R = config_.R;
  mpc_.u_min = u_min;
  mpc_.u_max = u_max;
  mpc_.du_max = config_.du_max;
  mpc_.validate(4);
}

EsoMpcState EsoMpcController::initial_state() const {
  EsoMpcState state;
  state.observer.x_hat = Eigen::VectorXd::Zero(aug_.n);
  state.observer.d_hat = Eigen::VectorXd::Zero(aug_.n_d);
  state.observer.L = gains_;
  return state;
}

Eigen::Vector2d EsoMpcController::steady_target(const Eigen::VectorXd& d_hat, double v) const {
  // Rows alphadot and xdot of the continuous model with alphadot = 0, xdot = v.
  const Eigen::MatrixXd& A = model_.A;
  const Eigen::VectorXd& B = model_.B;
  Eigen::Matrix2d m;
  m << A(1, 0), B(1), A(3, 0), B(3);
  const Eigen::Vector2d rhs(-(A(1, 3) * v + model_.C(1) + d_hat(0)),
                            -(A(3, 3) * v + model_.C(3) + d_hat(1)));
  return m.fullPivLu().solve(rhs);
}

std::pair<ControlOutput, EsoMpcState> EsoMpcController::step(
    const EsoMpcState& state, double v_target, const LongitudinalMeasurement& meas) const {
  EsoMpcState next = state;
  Eigen::VectorXd y(3);
  y << meas.alpha, meas.alpha_dot, meas.x_dot;
  if (!next.initialized) {
    next.observer.x_hat = y;
    next.initialized = true;
  }

  const Eigen::VectorXd d_hat = config_.freeze_disturbance
                                    ? Eigen::VectorXd::Zero(aug_.n_d)
                                    : Eigen::VectorXd(next.observer.d_hat);
  const LinearModel corrected = apply_disturbance(model_, kModelChannels, d_hat);
  const Eigen::Vector2d target = steady_target(d_hat, v_target);

  Eigen::VectorXd x0(4);
  x0 << meas.alpha, meas.alpha_dot, meas.x, meas.x_dot;
  Eigen::VectorXd X_ref(4 * mpc_.N_p);
  for (int k = 0; k < mpc_.N_p; ++k) {
    X_ref.segment<4>(4 * k) << target(0), 0.0, meas.x + v_target * T_s_ * (k + 1), v_target;
  }
  const Eigen::VectorXd U_ref = Eigen::VectorXd::Constant(mpc_.N_c, target(1));

  const PredictionMatrices pred = build_prediction(corrected, mpc_);
  const std::optional<double> previous =
      state.initialized ? std::optional<double>(state.last_u) : std::nullopt;
  const QPProblem qp = condense(pred, mpc_, x0, X_ref, U_ref, previous);
  const QPSolution sol = solve_qp(qp, state.warm_start);

  ControlOutput out;
  if (sol.status == QPStatus::Optimal) {
    out.tau = limit_input(sol.U(0), mpc_.u_min, mpc_.u_max, mpc_.du_max, previous);
    next.consecutive_failures = 0;
    next.warm_start = sol.U;
  } else {
    ++next.consecutive_failures;
    out.tau = fail_safe_output(state.last_u, next.consecutive_failures);
    out.flagged = true;
    next.warm_start.reset();
  }
  next.last_u = out.tau;
  next.observer = eso_update(next.observer, aug_, out.tau, y);
  return {out, next};
}

// ---------------------------------------------------------------------------
// Phase schedule

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::FastResponse:
      return "fast";
    case Phase::ReduceOvershoot:
      return "reduce";
    case Phase::Stabilization:
      return "stabilize";
  }
  return "unknown";
}

PhaseTracker phase_transition(const PhaseTracker& tracker, const PhaseThresholds& th,
                              double phi, double phi_dot, double phi_d, double dt) {
  PhaseTracker next = tracker;
  const double error = std::abs(phi - phi_d);
  if (!tracker.started || std::abs(phi_d - tracker.target) > th.band) {
    next = PhaseTracker{};
    next.started = true;
    next.target = phi_d;
    next.initial_error = error;
  } else {
    next.t_in_phase += dt;
  }

  const Phase before = next.phase;
  if (next.phase == Phase::FastResponse &&
      error <= th.fraction_remaining * next.initial_error) {
    next.phase = Phase::ReduceOvershoot;
  }
  if (next.phase == Phase::ReduceOvershoot) {
    if (error < th.band && std::abs(phi_dot) < th.rate_band) {
      next.in_band_time += dt;
    } else {
      next.in_band_time = 0.0;
    }
    if (next.in_band_time >= th.hold_time) next.phase = Phase::Stabilization;
  }
  if (next.phase != before) next.t_in_phase = 0.0;
  return next;
}

std::array<PhaseWeights, 3> OrientationControllerConfig::default_weights() {
  std::array<PhaseWeights, 3> w;
  // Fast response leaves the rates unweighted, reduce-overshoot damps them,
  // stabilization holds the angle tightly with moderate damping.
  const Eigen::Vector4d fast(10.0, 0.1, 150.0, 0.0);
  const Eigen::Vector4d reduce(10.0, 10.0, 1000.0, 2000.0);
  const Eigen::Vector4d stabilize(20.0, 1.0, 1000.0, 50.0);
  w[0] = {fast, fast, 1.0};
  w[1] = {reduce, reduce, 1.0};
  w[2] = {stabilize, stabilize, 1.0};
  return w;
}

// ---------------------------------------------------------------------------
// PWMPC

double steady_input(const RobotParams& params, const Eigen::Vector4d& x_rd, double v,
                    double alpha) {
  GeneralizedState s;
  s.q(kAlpha) = alpha;
  s = with_axis_state(s, Axis::Transverse, x_rd);
  const double friction = centripetal_friction(params, v, x_rd(2));
  const Eigen::Vector2d a0 = axis_accelerations(params, Axis::Transverse, s, 0.0, friction);
  const Eigen::Vector2d b = axis_accelerations(params, Axis::Transverse, s, 1.0, friction) - a0;
  return -b.dot(a0) / b.squaredNorm();
}

TransverseReference transverse_reference(const RobotParams& params, const MLPParams& mlp,
                                         double v, double phi_d, double alpha) {
  TransverseReference ref;
  ref.x_rd << forward(mlp, v, phi_d), 0.0, phi_d, 0.0;
  ref.u_rd = steady_input(params, ref.x_rd, v, alpha);
  return ref;
}

PwmpcController::PwmpcController(const RobotParams& model_params,
                                 const OrientationControllerConfig& config, MLPParams mlp,
                                 double T_s, double u_min, double u_max)
    : params_(model_params),
      config_(config),
      mlp_(std::move(mlp)),
      T_s_(T_s),
      u_min_(u_min),
      u_max_(u_max) {
  for (const PhaseWeights& w : config_.weights) {
    if ((w.q_diag.array() < 0.0).any() || (w.p_diag.array() < 0.0).any() || !(w.R > 0.0)) {
      throw std::invalid_argument("PhaseWeights: Q, P must be PSD and R positive");
    }
  }
}

std::pair<ControlOutput, PwmpcState> PwmpcController::step(
    const PwmpcState& state, double phi_d, const GeneralizedState& measured) const {
  if (!(std::abs(phi_d) < 0.5 * std::numbers::pi)) {
    throw std::invalid_argument("orientation step: |phi_d| must be below pi/2");
  }
  PwmpcState next = state;
  const double v = measured.qdot(kX);
  const double phi = measured.q(kPhi);

  FrictionLinearization friction;
  friction.force = centripetal_friction(params_, v, phi);
  if (config_.friction_stiffness) {
    const double c = std::cos(phi);
    friction.gradient(2) = params_.total_mass() * v * v / (params_.r * c * c);
  }
  const LinearModel model =
      make_linear_model(params_, Axis::Transverse, measured, T_s_, friction);
  const TransverseReference ref =
      transverse_reference(params_, mlp_, v, phi_d, measured.q(kAlpha));

  next.tracker = phase_transition(state.tracker, config_.thresholds, phi,
                                  measured.qdot(kPhi), phi_d, T_s_);
  const PhaseWeights& w =
      config_.fixed_weights ? config_.weights[0]
                            : config_.weights[static_cast<int>(next.tracker.phase)];

  MPCConfig cfg;
  cfg.N_p = config_.N_p;
  cfg.N_c = config_.N_c;
  cfg.Q = diag(w.q_diag);
  cfg.P = diag(w.p_diag);
  cfg.R = w.R;
  cfg.u_min = u_min_;
  cfg.u_max = u_max_;
  cfg.du_max = config_.du_max;

  const Eigen::VectorXd x0 = axis_state(measured, Axis::Transverse);
  const Eigen::VectorXd X_ref = ref.x_rd.replicate(cfg.N_p, 1);
  const Eigen::VectorXd U_ref = Eigen::VectorXd::Constant(cfg.N_c, ref.u_rd);
  const PredictionMatrices pred = build_prediction(model, cfg);
  const QPProblem qp = condense(pred, cfg, x0, X_ref, U_ref, state.last_u);
  const QPSolution sol = solve_qp(qp, state.warm_start);

  ControlOutput out;
  if (sol.status == QPStatus::Optimal) {
    out.tau = limit_input(sol.U(0), u_min_, u_max_, cfg.du_max, state.last_u);
    next.consecutive_failures = 0;
    next.warm_start = sol.U;
  } else {
    ++next.consecutive_failures;
    out.tau = fail_safe_output(state.last_u, next.consecutive_failures);
    out.flagged = true;
    next.warm_start.reset();
  }
  next.last_u = out.tau;
  return {out, next};
}

}  // namespace sphero
