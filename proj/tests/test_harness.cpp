#include "sphero/harness.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "sphero/errors.hpp"
#include "support.hpp"

namespace sphero {
namespace {

using testing::Gen;

constexpr double kTs = 0.02;

const MLPParams& beta_model() {
  static const MLPParams mlp = default_beta_model(RobotParams{}, 1);
  return mlp;
}

/// Rows with the roll channel carrying (y, target); every other column zero.
std::vector<TelemetryRow> roll_rows(const std::vector<double>& t, const std::vector<double>& y,
                                    const std::vector<double>& target) {
  std::vector<TelemetryRow> rows(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    rows[i].t = t[i];
    rows[i].phi = y[i];
    rows[i].phi_d = target[i];
  }
  return rows;
}

/// Unit-step response of a standard second-order system, sampled every dt,
/// with the step applied at t0.
void second_order(double zeta, double wn, double t0, double dt, double duration,
                  std::vector<double>& t, std::vector<double>& y, std::vector<double>& target) {
  const double wd = wn * std::sqrt(1.0 - zeta * zeta);
  const double phase = std::acos(zeta);
  for (double s = 0.0; s <= duration + 1e-12; s += dt) {
    t.push_back(s);
    target.push_back(s >= t0 - 1e-12 ? 1.0 : 0.0);
    const double tau = s - t0;
    y.push_back(tau <= 0.0 ? 0.0
                           : 1.0 - std::exp(-zeta * wn * tau) / std::sqrt(1.0 - zeta * zeta) *
                                       std::sin(wd * tau + phase));
  }
}

TEST(Profile, StepsAndSinusoid) {
  const Profile st = Profile::step(1.0, 0.5, 0.1);
  EXPECT_EQ(st.at(0.99), 0.1);
  EXPECT_EQ(st.at(1.0), 0.5);
  Profile sine;
  sine.kind = Profile::Kind::Sinusoid;
  sine.amplitude = 10.0 * std::numbers::pi / 180.0;
  sine.omega = 0.15;
  sine.phase = -0.3;
  sine.start = 2.0;
  EXPECT_EQ(sine.at(1.0), 0.0);
  EXPECT_NEAR(sine.at(5.0), sine.amplitude * std::sin(0.15 * 5.0 - 0.3), 1e-15);
  EXPECT_TRUE(sine.continuous());
  EXPECT_FALSE(st.continuous());
}

TEST(Metrics, InstantStepTakesOneSample) {
  std::vector<double> t, y, target;
  for (int i = 0; i <= 200; ++i) {
    t.push_back(i * kTs);
    target.push_back(i >= 50 ? 0.3 : 0.0);
    y.push_back(i >= 51 ? 0.3 : 0.0);
  }
  const Metrics m = compute_metrics(roll_rows(t, y, target), {});
  ASSERT_EQ(m.roll.steps.size(), 1u);
  EXPECT_NEAR(*m.roll.t_r, kTs, 1e-12);
  EXPECT_NEAR(*m.roll.t_s, kTs, 1e-12);
  EXPECT_EQ(*m.roll.sigma, 0.0);
  EXPECT_EQ(m.roll.e_rmse, 0.0);
}

TEST(Metrics, SecondOrderOvershoot) {
  std::vector<double> t, y, target;
  second_order(0.5, 5.0, 1.0, 1e-3, 6.0, t, y, target);
  const Metrics m = compute_metrics(roll_rows(t, y, target), {});
  const double analytic = 100.0 * std::exp(-std::numbers::pi * 0.5 / std::sqrt(0.75));
  EXPECT_NEAR(analytic, 16.3, 0.05);
  EXPECT_NEAR(*m.roll.sigma, analytic, 0.5);
  // 5% settling of the envelope, roughly 3 / (zeta wn)
  EXPECT_GT(*m.roll.t_s, 1.0);
  EXPECT_LT(*m.roll.t_s, 1.8);
}

TEST(Metrics, ConstantOffset) {
  std::vector<double> t, y, target;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(i * kTs);
    target.push_back(0.2);
    y.push_back(0.2 - 0.0375);
  }
  const Metrics m = compute_metrics(roll_rows(t, y, target), {});
  EXPECT_TRUE(m.roll.steps.empty());
  EXPECT_DOUBLE_EQ(m.roll.e_rmse, 0.0375);
}

TEST(Metrics, WiderBandNeverSettlesLater) {
  Gen gen(81);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> t, y, target;
    second_order(gen.uniform(0.3, 0.9), gen.uniform(4.0, 10.0), 0.5, kTs, 8.0, t, y, target);
    const auto rows = roll_rows(t, y, target);
    double previous = std::numeric_limits<double>::infinity();
    for (double band : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      MetricsInput in;
      in.config.band_fraction = band;
      const Metrics m = compute_metrics(rows, in);
      ASSERT_TRUE(m.roll.t_s.has_value());
      EXPECT_LE(*m.roll.t_s, previous);
      previous = *m.roll.t_s;
    }
  }
}

TEST(Metrics, EnergyAndCurrentRates) {
  std::vector<TelemetryRow> rows(3);
  for (int i = 0; i < 3; ++i) rows[i].t = i * 0.5;
  rows[1].alpha = 0.1;  // alpha rate 0.2 rad/s
  rows[1].tau1 = 2.0;
  rows[2].alpha = 0.1;
  rows[2].beta = -0.05;  // beta rate -0.1 rad/s
  rows[2].tau2 = 3.0;
  rows[1].I1 = 1.0;
  rows[2].I2 = -2.0;
  const Metrics m = compute_metrics(rows, {});
  EXPECT_NEAR(m.energy_Q, 2.0 * 0.2 * 0.5 + 3.0 * 0.1 * 0.5, 1e-15);
  EXPECT_NEAR(m.i_aa_1, (2.0 + 2.0) / 2.0, 1e-15);
  EXPECT_NEAR(m.i_aa_2, (0.0 + 4.0) / 2.0, 1e-15);
  EXPECT_THROW(compute_metrics({}, {}), UndefinedMetricError);
}

TEST(Guidance, OnCircleCommandsCruiseAndLean) {
  TrajectoryRef circle;  // radius 4 m at 0.125 rad/s
  const double r = 0.3;
  for (double t : {0.0, 3.0, 17.0}) {
    const TrajectoryRef::Sample s = circle.at(t);
    const GuidanceCommand cmd = guidance_step(circle, t, s.pose, 0.5, r);
    EXPECT_NEAR(cmd.v_d, 0.5, 1e-12);
    EXPECT_NEAR(cmd.phi_d, std::atan(r / 4.0), 1e-12);
  }
}

TEST(Guidance, StraightLineSigns) {
  TrajectoryRef line;
  line.kind = TrajectoryRef::Kind::Line;
  line.speed = 0.5;
  const Pose on = line.at(2.0).pose;
  EXPECT_EQ(guidance_step(line, 2.0, on, 0.5, 0.3).phi_d, 0.0);
  Pose left = on;
  left.y += 0.3;
  EXPECT_LT(guidance_step(line, 2.0, left, 0.5, 0.3).phi_d, 0.0);
  Pose right = on;
  right.y -= 0.3;
  EXPECT_GT(guidance_step(line, 2.0, right, 0.5, 0.3).phi_d, 0.0);
}

TEST(Guidance, PoseFollowsTurningRadius) {
  // R = r / tan(phi): a full turn takes 2 pi R / v.
  const double r = 0.3, phi = 0.2, v = 0.5;
  const double R = r / std::tan(phi);
  Pose p;
  const int steps = 100000;
  const double dt = 2.0 * std::numbers::pi * R / v / steps;
  for (int i = 0; i < steps; ++i) p = integrate_pose(p, v, phi, r, dt);
  EXPECT_NEAR(p.psi, 2.0 * std::numbers::pi, 1e-9);
  EXPECT_NEAR(std::hypot(p.x, p.y), 0.0, 1e-3);
}

TEST(Scenario, JsonRoundTrip) {
  Scenario s;
  s.name = "round";
  s.duration = 3.0;
  s.mass_perturbation = 0.1;
  s.friction.mu_c = 0.02;
  s.velocity_controller = ControllerKind::Pid;
  s.fixed_weights = true;
  s.v_profile = Profile::step(1.0, 0.5);
  s.phi_profile.kind = Profile::Kind::Sinusoid;
  s.phi_profile.amplitude = 0.1;
  s.phi_profile.omega = 0.2;
  s.velocity_mpc.du_max = 0.4;
  s.orientation_mpc.weights[2].R = 3.0;
  const Scenario back = scenario_from_json(scenario_to_json(s, 5));
  EXPECT_EQ(back.name, "round");
  EXPECT_EQ(back.duration, 3.0);
  EXPECT_EQ(back.mass_perturbation, 0.1);
  EXPECT_EQ(back.friction.mu_c, 0.02);
  EXPECT_EQ(back.velocity_controller, ControllerKind::Pid);
  EXPECT_TRUE(back.fixed_weights);
  EXPECT_EQ(back.v_profile.at(2.0), 0.5);
  EXPECT_EQ(back.phi_profile.at(1.0), s.phi_profile.at(1.0));
  EXPECT_EQ(*back.velocity_mpc.du_max, 0.4);
  EXPECT_EQ(back.orientation_mpc.weights[2].R, 3.0);
  EXPECT_EQ(scenario_to_json(back, 5), scenario_to_json(s, 5));
}

TEST(Scenario, RejectsBadInput) {
  EXPECT_THROW(scenario_from_json("{not json"), std::exception);
  EXPECT_THROW(scenario_from_json(R"({"duration": -1})"), std::invalid_argument);
  EXPECT_THROW(scenario_from_json(R"({"velocity_controller": "lqr"})"), std::invalid_argument);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), IoError);
}

TEST(RunScenario, NullScenarioStaysAtRest) {
  Scenario s;
  s.duration = 2.0;
  const ScenarioResult r = run_scenario(s, 1, beta_model());
  EXPECT_EQ(r.rows.size(), 101u);
  for (const TelemetryRow& row : r.rows) {
    EXPECT_LT(std::abs(row.tau1), 1e-6);
    EXPECT_LT(std::abs(row.tau2), 1e-2);
  }
  EXPECT_LT(r.metrics.velocity.e_rmse, 1e-6);
  EXPECT_LT(r.metrics.roll.e_rmse, 1e-4);
  EXPECT_EQ(r.flagged_cycles, 0);
}

TEST(RunScenario, DeterministicTelemetry) {
  Scenario s;
  s.duration = 3.0;
  s.v_profile = Profile::step(0.5, 0.4);
  s.phi_profile = Profile::step(1.0, 0.1);
  s.friction.mu_c = 0.01;
  const std::string a = telemetry_csv(run_scenario(s, 3, beta_model()).rows);
  const std::string b = telemetry_csv(run_scenario(s, 3, beta_model()).rows);
  EXPECT_EQ(a, b);
}

TEST(RunScenario, TorqueLimitsAndPhaseSwitchContinuity) {
  Scenario s;
  s.duration = 6.0;
  s.v_profile = Profile::constant(1.0);
  s.phi_profile = Profile::step(1.0, 0.1745);
  const ScenarioResult r = run_scenario(s, 1, beta_model());
  const double du = *s.orientation_mpc.du_max;
  bool switched = false;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    EXPECT_LE(std::abs(r.rows[i].tau1), s.robot.tau_max);
    EXPECT_LE(std::abs(r.rows[i].tau2), s.robot.tau_max);
    EXPECT_LE(std::abs(r.rows[i].tau2 - r.rows[i - 1].tau2), du + 1e-12);
    switched = switched || r.rows[i].phase != r.rows[i - 1].phase;
  }
  EXPECT_TRUE(switched);
}

TEST(RunScenario, DisturbanceRejectedWithoutOffset) {
  Scenario s;
  s.duration = 14.0;
  s.v_profile = Profile::step(1.0, 0.5);
  s.disturbance_torque = 0.3;
  s.disturbance_start = 6.0;
  const ScenarioResult r = run_scenario(s, 1, beta_model());
  double before = 0.0;
  for (const TelemetryRow& row : r.rows) {
    if (row.t < 6.0) before = row.tau1;
  }
  // The controller cancels the added torque once the estimate converges.
  EXPECT_NEAR(r.rows.back().tau1 - before, -0.3, 1e-2);
  EXPECT_LT(std::abs(r.rows.back().v - 0.5), 1e-3);
}

TEST(RunScenario, CircleIsTracked) {
  Scenario s;
  s.duration = 60.0;
  s.trajectory = TrajectoryRef{};
  const ScenarioResult r = run_scenario(s, 1, beta_model());
  ASSERT_TRUE(r.path_error_max.has_value());
  EXPECT_LT(*r.path_error_max, 0.4);
}

TEST(Export, CsvRoundTripAndSchema) {
  Scenario s;
  s.name = "export_check";
  s.duration = 2.0;
  s.v_profile = Profile::step(0.4, 0.3);
  const ScenarioResult r = run_scenario(s, 2, beta_model());
  const std::string csv = telemetry_csv(r.rows);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "t,v,v_d,alpha,beta,theta,phi,phi_d,tau1,tau2,I1,I2,phase");
  const std::vector<TelemetryRow> parsed = parse_telemetry_csv(csv);
  ASSERT_EQ(parsed.size(), r.rows.size());
  EXPECT_EQ(compute_metrics(parsed, metrics_input(s)), r.metrics);

  const auto dir = std::filesystem::temp_directory_path() / "sphero_export_test";
  std::filesystem::remove_all(dir);
  export_results(r, dir);
  EXPECT_EQ(read_file(dir / "export_check.csv"), csv);
  EXPECT_TRUE(std::filesystem::exists(dir / "export_check_metrics.json"));
  const Scenario saved = load_scenario(dir / "export_check_scenario.json");
  EXPECT_EQ(saved.name, "export_check");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    EXPECT_NE(entry.path().extension(), ".tmp");
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sphero
