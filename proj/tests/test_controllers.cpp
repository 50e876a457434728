#include "sphero/controllers.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "sphero/harness.hpp"
#include "sphero/mlp.hpp"
#include "support.hpp"

namespace sphero {
namespace {

using testing::Gen;

constexpr double kTs = 0.02;

const MLPParams& beta_model() {
  static const MLPParams mlp = default_beta_model(RobotParams{}, 1);
  return mlp;
}

TEST(Pid, NullAndProportional) {
  PIDGains g{1.0, 1.0, 1.0, 1.0, 10.0};
  EXPECT_EQ(pid_step(g, {}, 0.0, 0.0, kTs).output, 0.0);
  g = {2.0, 0.0, 0.0, 1.0, 10.0};
  EXPECT_EQ(pid_step(g, {}, 0.5, 0.0, kTs).output, 1.0);
}

TEST(Pid, IntegralRampsUntilClamp) {
  const PIDGains g{0.0, 3.0, 0.0, 0.9, 10.0};
  const double e = 0.5;
  PIDState s;
  for (int k = 1; k <= 100; ++k) {
    const PIDOutput out = pid_step(g, s, e, 0.0, kTs);
    s = out.state;
    EXPECT_NEAR(out.output, std::min(3.0 * e * kTs * k, 0.9), 1e-12);
  }
}

TEST(Pid, DerivativeOnMeasurementAndOutputClamp) {
  const PIDGains g{0.0, 0.0, 2.0, 1.0, 0.5};
  PIDState s = pid_step(g, {}, 1.0, 0.0, kTs).state;
  // setpoint jump does not kick; measurement motion does
  EXPECT_EQ(pid_step(g, s, 5.0, 0.0, kTs).output, 0.0);
  EXPECT_NEAR(pid_step(g, s, 0.0, 0.001, kTs).output, -2.0 * 0.001 / kTs, 1e-12);
  EXPECT_EQ(pid_step(g, s, 0.0, 1.0, kTs).output, -0.5);
  EXPECT_THROW(pid_step(g, s, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(Pid, CascadeFeedsOuterIntoInner) {
  CascadeGains g;
  g.outer = {2.0, 0.0, 0.0, 1.0, 0.3};
  g.inner = {10.0, 0.0, 0.0, 1.0, 10.0};
  const CascadeOutput out = cascade_step(g, {}, 1.0, 0.9, 0.05, kTs);
  EXPECT_NEAR(out.inner_setpoint, 0.2, 1e-15);
  EXPECT_NEAR(out.output, 10.0 * (0.2 - 0.05), 1e-12);
  EXPECT_EQ(cascade_step(g, {}, 10.0, 0.0, 0.0, kTs).inner_setpoint, 0.3);
}

TEST(PhaseTransition, FreshTargetStartsFast) {
  const PhaseThresholds th;
  const PhaseTracker t = phase_transition({}, th, 0.0, 0.0, 0.3, kTs);
  EXPECT_TRUE(t.started);
  EXPECT_EQ(t.phase, Phase::FastResponse);
  EXPECT_DOUBLE_EQ(t.initial_error, 0.3);
}

TEST(PhaseTransition, ConvergedReachesStabilization) {
  const PhaseThresholds th;
  PhaseTracker t;
  int k = 0;
  for (; k < 100 && t.phase != Phase::Stabilization; ++k) {
    t = phase_transition(t, th, 0.2, 0.0, 0.2, kTs);
  }
  EXPECT_EQ(t.phase, Phase::Stabilization);
  EXPECT_LE(k * kTs, th.hold_time + 2 * kTs);
}

TEST(PhaseTransition, ThresholdWalkThrough) {
  PhaseThresholds th;
  th.fraction_remaining = 0.3;
  th.band = 0.02;
  th.rate_band = 0.05;
  th.hold_time = 0.25;
  const double dt = 0.125;  // exact in binary, two cycles make the hold time
  struct Sample {
    double phi, phi_dot;
    Phase expect;
  };
  const double target = 1.0;
  const std::vector<Sample> walk{
      {0.0, 0.0, Phase::FastResponse},       // error 1.0 starts the episode
      {0.4, 2.0, Phase::FastResponse},       // 0.6 > 0.3
      {0.75, 1.0, Phase::ReduceOvershoot},   // 0.25 is below the fraction
      {0.99, 0.01, Phase::ReduceOvershoot},  // in band, held 0.125
      {0.995, 0.2, Phase::ReduceOvershoot},  // rate too high resets the hold
      {0.995, 0.01, Phase::ReduceOvershoot}, // held 0.125
      {1.0, 0.0, Phase::Stabilization},      // held 0.25
      {0.9, 0.5, Phase::Stabilization},      // phases never move backwards
  };
  PhaseTracker t;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    t = phase_transition(t, th, walk[i].phi, walk[i].phi_dot, target, dt);
    EXPECT_EQ(t.phase, walk[i].expect) << "sample " << i;
  }
  // a target change larger than the band restarts the episode
  t = phase_transition(t, th, 1.0, 0.0, 1.5, dt);
  EXPECT_EQ(t.phase, Phase::FastResponse);
  EXPECT_DOUBLE_EQ(t.initial_error, 0.5);
  // a change inside the band does not
  const PhaseTracker same = phase_transition(t, th, 1.0, 0.0, 1.51, dt);
  EXPECT_DOUBLE_EQ(same.initial_error, 0.5);
  EXPECT_STREQ(to_string(Phase::ReduceOvershoot), "reduce");
}

TEST(FailSafe, HoldsThenZeroes) {
  EXPECT_EQ(fail_safe_output(1.5, 1), 1.5);
  EXPECT_EQ(fail_safe_output(1.5, 4), 1.5);
  EXPECT_EQ(fail_safe_output(1.5, 5), 0.0);
  EXPECT_EQ(fail_safe_output(1.5, 9), 0.0);
}

TEST(EsoMpc, HoldsSteadyCruise) {
  const RobotParams params;
  const EsoMpcController ctrl(params, VelocityControllerConfig{}, kTs, -params.tau_max,
                              params.tau_max);
  const double v = 0.5;
  const Eigen::Vector2d target = ctrl.steady_target(Eigen::VectorXd::Zero(2), v);
  LongitudinalMeasurement meas;
  meas.alpha = target(0);
  meas.x_dot = v;
  const auto [out, next] = ctrl.step(ctrl.initial_state(), v, meas);
  EXPECT_FALSE(out.flagged);
  EXPECT_NEAR(out.tau, target(1), 1e-6);
  // The target torque balances the nonlinear plant at that state.
  GeneralizedState s;
  s.q(kAlpha) = target(0);
  s.qdot(kX) = v;
  EXPECT_LT(axis_accelerations(params, Axis::Longitudinal, s, target(1), 0.0).cwiseAbs().maxCoeff(),
            1e-6);
  EXPECT_TRUE(next.initialized);
}

TEST(EsoMpc, RespectsTorqueAndRateLimits) {
  Gen gen(71);
  const RobotParams params;
  VelocityControllerConfig cfg;
  cfg.du_max = 0.3;
  const double u_max = 2.0;
  const EsoMpcController ctrl(params, cfg, kTs, -u_max, u_max);
  EsoMpcState state = ctrl.initial_state();
  double previous = 0.0;
  for (int k = 0; k < 200; ++k) {
    LongitudinalMeasurement m{gen.uniform(-0.3, 0.3), gen.uniform(-1, 1), gen.uniform(-5, 5),
                              gen.uniform(-1, 1)};
    const auto [out, next] = ctrl.step(state, gen.uniform(-1, 1), m);
    EXPECT_LE(std::abs(out.tau), u_max);
    if (k > 0) {
      EXPECT_LE(std::abs(out.tau - previous), 0.3 + 1e-9);
    }
    previous = out.tau;
    state = next;
  }
}

TEST(EsoMpc, FrozenEstimateIgnoresObserver) {
  const RobotParams params;
  VelocityControllerConfig cfg;
  cfg.freeze_disturbance = true;
  const EsoMpcController frozen(params, cfg, kTs, -10, 10);
  EsoMpcState state = frozen.initial_state();
  state.initialized = true;
  state.observer.x_hat = Eigen::Vector3d(0.0, 0.0, 0.2);
  state.observer.d_hat = Eigen::Vector2d(0.5, -0.7);
  EsoMpcState clean = state;
  clean.observer.d_hat.setZero();
  LongitudinalMeasurement m{0.01, 0.0, 0.0, 0.2};
  EXPECT_EQ(frozen.step(state, 0.5, m).first.tau, frozen.step(clean, 0.5, m).first.tau);
}

TEST(Pwmpc, SteadyInputZeroesAccelerations) {
  const RobotParams params;
  for (double v : {0.3, 0.5, 1.0}) {
    for (double phi : {-0.2, 0.05, 0.1745, 0.2618}) {
      const Eigen::Vector4d x_rd(steady_state_beta(params, v, phi), 0.0, phi, 0.0);
      const double u = steady_input(params, x_rd, v);
      GeneralizedState s;
      s.q(kBeta) = x_rd(0);
      s.q(kPhi) = phi;
      const Eigen::Vector2d acc = axis_accelerations(params, Axis::Transverse, s, u,
                                                     centripetal_friction(params, v, phi));
      EXPECT_LT(acc.cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Pwmpc, StraightLineNullCase) {
  const RobotParams params;
  const TransverseReference ref = transverse_reference(params, beta_model(), 0.0, 0.0);
  EXPECT_NEAR(ref.x_rd(0), 0.0, 1e-3);
  EXPECT_NEAR(ref.u_rd, 0.0, 1e-2);
  const PwmpcController ctrl(params, OrientationControllerConfig{}, beta_model(), kTs,
                             -params.tau_max, params.tau_max);
  const auto [out, next] = ctrl.step(ctrl.initial_state(), 0.0, GeneralizedState{});
  EXPECT_FALSE(out.flagged);
  EXPECT_LT(std::abs(out.tau), 1e-2);
  EXPECT_THROW(ctrl.step(next, 2.0, GeneralizedState{}), std::invalid_argument);
}

TEST(Pwmpc, RespectsTorqueAndRateLimits) {
  Gen gen(72);
  const RobotParams params;
  OrientationControllerConfig cfg;
  cfg.du_max = 0.4;
  const double u_max = 3.0;
  const PwmpcController ctrl(params, cfg, beta_model(), kTs, -u_max, u_max);
  PwmpcState state = ctrl.initial_state();
  for (int k = 0; k < 200; ++k) {
    GeneralizedState m = gen.small_state(0.2, 0.5);
    m.qdot(kX) = gen.uniform(0.2, 1.0);
    const double phi_d = k % 40 < 20 ? 0.2 : -0.1;  // target switches exercise the phases
    const auto [out, next] = ctrl.step(state, phi_d, m);
    EXPECT_LE(std::abs(out.tau), u_max);
    EXPECT_LE(std::abs(out.tau - state.last_u), 0.4 + 1e-9);
    state = next;
  }
}

TEST(Pwmpc, RejectsNegativeWeights) {
  OrientationControllerConfig cfg;
  cfg.weights[1].q_diag(0) = -1.0;
  EXPECT_THROW(PwmpcController(RobotParams{}, cfg, beta_model(), kTs, -1, 1),
               std::invalid_argument);
}

}  // namespace
}  // namespace sphero
