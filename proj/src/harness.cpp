#include "sphero/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sphero/errors.hpp"

namespace sphero {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Profiles and guidance

double Profile::at(double t) const {
  if (kind == Kind::Sinusoid) {
    return t < start ? initial : offset + amplitude * std::sin(omega * t + phase);
  }
  double value = initial;
  for (const auto& [time, v] : steps) {
    if (t >= time) value = v;
  }
  return value;
}

Profile Profile::constant(double value) {
  Profile p;
  p.initial = value;
  return p;
}

Profile Profile::step(double time, double value, double initial) {
  Profile p;
  p.initial = initial;
  p.steps.emplace_back(time, value);
  return p;
}

TrajectoryRef::Sample TrajectoryRef::at(double t) const {
  Sample s;
  if (kind == Kind::Circle) {
    const double a = omega * t + phase0;
    s.pose.x = cx + radius * std::cos(a);
    s.pose.y = cy + radius * std::sin(a);
    s.pose.psi = a + (omega >= 0.0 ? 0.5 : -0.5) * std::numbers::pi;
    s.v = std::abs(omega) * radius;
    s.omega = omega;
  } else {
    s.pose.x = x0 + speed * t * std::cos(heading);
    s.pose.y = y0 + speed * t * std::sin(heading);
    s.pose.psi = heading;
    s.v = speed;
    s.omega = 0.0;
  }
  return s;
}

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

GuidanceCommand guidance_step(const TrajectoryRef& traj, double t, const Pose& pose, double v,
                              double shell_radius) {
  const TrajectoryRef::Sample ref = traj.at(t);
  const GuidanceGains& k = traj.gains;
  const double dx = ref.pose.x - pose.x;
  const double dy = ref.pose.y - pose.y;
  const double c = std::cos(pose.psi);
  const double s = std::sin(pose.psi);
  const double e_x = c * dx + s * dy;
  const double e_y = -s * dx + c * dy;
  const double e_psi = wrap_angle(ref.pose.psi - pose.psi);

  GuidanceCommand cmd;
  cmd.v_d = std::clamp(ref.v * std::cos(e_psi) + k.k_x * e_x, 0.0, k.v_max);
  const double omega = ref.omega + ref.v * (k.k_y * e_y + k.k_psi * std::sin(e_psi));
  const double speed = std::max(v, k.v_floor);
  cmd.phi_d = std::clamp(std::atan(shell_radius * omega / speed), -k.phi_max, k.phi_max);
  return cmd;
}

Pose integrate_pose(const Pose& pose, double v, double phi, double shell_radius, double dt) {
  Pose next = pose;
  next.x += v * std::cos(pose.psi) * dt;
  next.y += v * std::sin(pose.psi) * dt;
  next.psi += v * std::tan(phi) / shell_radius * dt;
  return next;
}

// ---------------------------------------------------------------------------
// Scenario

CascadeGains Scenario::default_velocity_pid() {
  CascadeGains g;
  g.outer = {3.61156, 27.0395, 0.287075, 0.3, 0.5};
  g.inner = {55.5446, 7.88014, 6.35192, 2.0, 10.0};
  return g;
}

CascadeGains Scenario::default_orientation_pid() {
  CascadeGains g;
  g.outer = {2.185, 0.9539, 0.8265, 0.3, 0.5};
  g.inner = {45.66, 0.207, 6.118, 2.0, 10.0};
  return g;
}

void Scenario::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be positive");
  if (!(mass_perturbation > -1.0)) {
    throw std::invalid_argument("scenario: mass perturbation must exceed -100%");
  }
  robot.validate();
  friction.validate();
  for (const Profile* p : {&v_profile, &phi_profile}) {
    for (std::size_t i = 1; i < p->steps.size(); ++i) {
      if (p->steps[i].first < p->steps[i - 1].first) {
        throw std::invalid_argument("scenario: step times must be ascending");
      }
    }
  }
}

namespace {

json profile_to_json(const Profile& p) {
  json j;
  j["initial"] = p.initial;
  if (p.kind == Profile::Kind::Sinusoid) {
    j["type"] = "sinusoid";
    j["amplitude"] = p.amplitude;
    j["omega"] = p.omega;
    j["phase"] = p.phase;
    j["offset"] = p.offset;
    j["start"] = p.start;
  } else {
    j["type"] = "steps";
    j["steps"] = json::array();
    for (const auto& [t, v] : p.steps) j["steps"].push_back({t, v});
  }
  return j;
}

Profile profile_from_json(const json& j) {
  Profile p;
  p.initial = j.value("initial", 0.0);
  const std::string type = j.value("type", "steps");
  if (type == "sinusoid") {
    p.kind = Profile::Kind::Sinusoid;
    p.amplitude = j.value("amplitude", 0.0);
    p.omega = j.value("omega", 0.0);
    p.phase = j.value("phase", 0.0);
    p.offset = j.value("offset", 0.0);
    p.start = j.value("start", 0.0);
  } else if (type == "steps") {
    if (j.contains("steps")) {
      for (const auto& s : j.at("steps")) {
        p.steps.emplace_back(s.at(0).get<double>(), s.at(1).get<double>());
      }
    }
  } else {
    throw std::invalid_argument("scenario: unknown profile type '" + type + "'");
  }
  return p;
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "mpc") return ControllerKind::Mpc;
  if (s == "pid") return ControllerKind::Pid;
  throw std::invalid_argument("scenario: controller must be 'mpc' or 'pid', got '" + s + "'");
}

const char* controller_name(ControllerKind k) { return k == ControllerKind::Mpc ? "mpc" : "pid"; }

json vec4(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }

Eigen::Vector4d vec4_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("scenario: expected 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json pid_to_json(const PIDGains& g) {
  return {{"kp", g.kp},
          {"ki", g.ki},
          {"kd", g.kd},
          {"integral_limit", g.integral_limit},
          {"output_limit", g.output_limit}};
}

PIDGains pid_from_json(const json& j, PIDGains g) {
  g.kp = j.value("kp", g.kp);
  g.ki = j.value("ki", g.ki);
  g.kd = j.value("kd", g.kd);
  g.integral_limit = j.value("integral_limit", g.integral_limit);
  g.output_limit = j.value("output_limit", g.output_limit);
  if (!(g.integral_limit > 0.0) || !(g.output_limit > 0.0)) {
    throw std::invalid_argument("scenario: PID clamps must be positive");
  }
  return g;
}

CascadeGains cascade_from_json(const json& j, CascadeGains g) {
  if (j.contains("outer")) g.outer = pid_from_json(j.at("outer"), g.outer);
  if (j.contains("inner")) g.inner = pid_from_json(j.at("inner"), g.inner);
  return g;
}

json robot_to_json(const RobotParams& p) {
  return {{"m_s", p.m_s},   {"m_f", p.m_f},   {"m_p", p.m_p},   {"I_sx", p.I_sx},
          {"I_sy", p.I_sy}, {"I_fx", p.I_fx}, {"I_fy", p.I_fy}, {"I_px", p.I_px},
          {"I_py", p.I_py}, {"r", p.r},       {"l", p.l},       {"zeta", p.zeta},
          {"g", p.g},       {"k_t", p.k_t},   {"tau_max", p.tau_max}};
}

RobotParams robot_from_json(const json& j) {
  RobotParams p;
  p.m_s = j.value("m_s", p.m_s);
  p.m_f = j.value("m_f", p.m_f);
  p.m_p = j.value("m_p", p.m_p);
  p.I_sx = j.value("I_sx", p.I_sx);
  p.I_sy = j.value("I_sy", p.I_sy);
  p.I_fx = j.value("I_fx", p.I_fx);
  p.I_fy = j.value("I_fy", p.I_fy);
  p.I_px = j.value("I_px", p.I_px);
  p.I_py = j.value("I_py", p.I_py);
  p.r = j.value("r", p.r);
  p.l = j.value("l", p.l);
  p.zeta = j.value("zeta", p.zeta);
  p.g = j.value("g", p.g);
  p.k_t = j.value("k_t", p.k_t);
  p.tau_max = j.value("tau_max", p.tau_max);
  return p;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key,
                                    std::optional<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario: malformed JSON: ") + e.what());
  }
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.duration = j.value("duration", s.duration);
    if (j.contains("robot")) s.robot = robot_from_json(j.at("robot"));
    s.mass_perturbation = j.value("mass_perturbation", 0.0);
    if (j.contains("friction")) {
      const json& f = j.at("friction");
      s.friction.mu_c = f.value("mu_c", 0.0);
      s.friction.c_v = f.value("c_v", 0.0);
      s.friction.x_enabled = f.value("x_enabled", true);
      s.friction.y_enabled = f.value("y_enabled", true);
    }
    if (j.contains("disturbance")) {
      s.disturbance_torque = j.at("disturbance").value("torque", 0.0);
      s.disturbance_start = j.at("disturbance").value("start", 0.0);
    }
    s.velocity_controller = controller_from_string(j.value("velocity_controller", "mpc"));
    s.orientation_controller = controller_from_string(j.value("orientation_controller", "mpc"));
    const std::string mode = j.value("phase_mode", "phased");
    if (mode != "phased" && mode != "fixed") {
      throw std::invalid_argument("scenario: phase_mode must be 'phased' or 'fixed'");
    }
    s.fixed_weights = mode == "fixed";
    s.freeze_eso = j.value("freeze_eso", false);
    if (j.contains("v_profile")) s.v_profile = profile_from_json(j.at("v_profile"));
    if (j.contains("phi_profile")) s.phi_profile = profile_from_json(j.at("phi_profile"));
    if (j.contains("trajectory") && !j.at("trajectory").is_null()) {
      const json& t = j.at("trajectory");
      TrajectoryRef tr;
      const std::string kind = t.value("kind", "circle");
      if (kind == "line") {
        tr.kind = TrajectoryRef::Kind::Line;
      } else if (kind != "circle") {
        throw std::invalid_argument("scenario: trajectory kind must be 'circle' or 'line'");
      }
      tr.cx = t.value("cx", tr.cx);
      tr.cy = t.value("cy", tr.cy);
      tr.radius = t.value("radius", tr.radius);
      tr.omega = t.value("omega", tr.omega);
      tr.phase0 = t.value("phase0", tr.phase0);
      tr.x0 = t.value("x0", tr.x0);
      tr.y0 = t.value("y0", tr.y0);
      tr.heading = t.value("heading", tr.heading);
      tr.speed = t.value("speed", tr.speed);
      if (t.contains("gains")) {
        const json& g = t.at("gains");
        tr.gains.k_x = g.value("k_x", tr.gains.k_x);
        tr.gains.k_y = g.value("k_y", tr.gains.k_y);
        tr.gains.k_psi = g.value("k_psi", tr.gains.k_psi);
        tr.gains.phi_max = g.value("phi_max", tr.gains.phi_max);
        tr.gains.v_max = g.value("v_max", tr.gains.v_max);
        tr.gains.v_floor = g.value("v_floor", tr.gains.v_floor);
      }
      s.trajectory = tr;
    }
    if (j.contains("velocity_mpc")) {
      const json& c = j.at("velocity_mpc");
      VelocityControllerConfig& v = s.velocity_mpc;
      v.N_p = c.value("N_p", v.N_p);
      v.N_c = c.value("N_c", v.N_c);
      if (c.contains("q_diag")) v.q_diag = vec4_from(c.at("q_diag"));
      v.R = c.value("R", v.R);
      v.du_max = optional_from(c, "du_max", v.du_max);
      if (c.contains("observer_poles")) {
        v.observer_poles = c.at("observer_poles").get<std::vector<double>>();
      }
    }
    if (j.contains("orientation_mpc")) {
      const json& c = j.at("orientation_mpc");
      OrientationControllerConfig& o = s.orientation_mpc;
      o.N_p = c.value("N_p", o.N_p);
      o.N_c = c.value("N_c", o.N_c);
      o.du_max = optional_from(c, "du_max", o.du_max);
      o.friction_stiffness = c.value("friction_stiffness", o.friction_stiffness);
      if (c.contains("weights")) {
        const json& w = c.at("weights");
        if (!w.is_array() || w.size() != 3) {
          throw std::invalid_argument("scenario: weights must list three phases");
        }
        for (std::size_t i = 0; i < 3; ++i) {
          o.weights[i].q_diag = vec4_from(w[i].at("q_diag"));
          o.weights[i].p_diag = vec4_from(w[i].at("p_diag"));
          o.weights[i].R = w[i].at("R").get<double>();
        }
      }
      if (c.contains("thresholds")) {
        const json& t = c.at("thresholds");
        PhaseThresholds& th = o.thresholds;
        th.fraction_remaining = t.value("fraction_remaining", th.fraction_remaining);
        th.band = t.value("band", th.band);
        th.rate_band = t.value("rate_band", th.rate_band);
        th.hold_time = t.value("hold_time", th.hold_time);
      }
    }
    if (j.contains("velocity_pid")) {
      s.velocity_pid = cascade_from_json(j.at("velocity_pid"), s.velocity_pid);
    }
    if (j.contains("orientation_pid")) {
      s.orientation_pid = cascade_from_json(j.at("orientation_pid"), s.orientation_pid);
    }
    if (j.contains("metrics")) {
      const json& m = j.at("metrics");
      s.metrics.band_fraction = m.value("band_fraction", s.metrics.band_fraction);
      s.metrics.band_floor = m.value("band_floor", s.metrics.band_floor);
      s.metrics.tracking_start = m.value("tracking_start", s.metrics.tracking_start);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario: bad field: ") + e.what());
  }
  s.orientation_mpc.fixed_weights = s.fixed_weights;
  s.velocity_mpc.freeze_disturbance = s.freeze_eso;
  s.validate();
  return s;
}

std::string scenario_to_json(const Scenario& s, std::optional<std::uint64_t> seed) {
  json j;
  j["name"] = s.name;
  j["duration"] = s.duration;
  if (seed) j["seed"] = *seed;
  j["robot"] = robot_to_json(s.robot);
  j["mass_perturbation"] = s.mass_perturbation;
  j["friction"] = {{"mu_c", s.friction.mu_c},
                   {"c_v", s.friction.c_v},
                   {"x_enabled", s.friction.x_enabled},
                   {"y_enabled", s.friction.y_enabled}};
  j["disturbance"] = {{"torque", s.disturbance_torque}, {"start", s.disturbance_start}};
  j["velocity_controller"] = controller_name(s.velocity_controller);
  j["orientation_controller"] = controller_name(s.orientation_controller);
  j["phase_mode"] = s.fixed_weights ? "fixed" : "phased";
  j["freeze_eso"] = s.freeze_eso;
  j["v_profile"] = profile_to_json(s.v_profile);
  j["phi_profile"] = profile_to_json(s.phi_profile);
  if (s.trajectory) {
    const TrajectoryRef& t = *s.trajectory;
    j["trajectory"] = {{"kind", t.kind == TrajectoryRef::Kind::Circle ? "circle" : "line"},
                       {"cx", t.cx},
                       {"cy", t.cy},
                       {"radius", t.radius},
                       {"omega", t.omega},
                       {"phase0", t.phase0},
                       {"x0", t.x0},
                       {"y0", t.y0},
                       {"heading", t.heading},
                       {"speed", t.speed},
                       {"gains",
                        {{"k_x", t.gains.k_x},
                         {"k_y", t.gains.k_y},
                         {"k_psi", t.gains.k_psi},
                         {"phi_max", t.gains.phi_max},
                         {"v_max", t.gains.v_max},
                         {"v_floor", t.gains.v_floor}}}};
  } else {
    j["trajectory"] = nullptr;
  }
  const VelocityControllerConfig& v = s.velocity_mpc;
  j["velocity_mpc"] = {{"N_p", v.N_p},
                       {"N_c", v.N_c},
                       {"q_diag", vec4(v.q_diag)},
                       {"R", v.R},
                       {"du_max", optional_number(v.du_max)},
                       {"observer_poles", v.observer_poles}};
  const OrientationControllerConfig& o = s.orientation_mpc;
  json weights = json::array();
  for (const PhaseWeights& w : o.weights) {
    weights.push_back({{"q_diag", vec4(w.q_diag)}, {"p_diag", vec4(w.p_diag)}, {"R", w.R}});
  }
  j["orientation_mpc"] = {{"N_p", o.N_p},
                          {"N_c", o.N_c},
                          {"du_max", optional_number(o.du_max)},
                          {"friction_stiffness", o.friction_stiffness},
                          {"weights", weights},
                          {"thresholds",
                           {{"fraction_remaining", o.thresholds.fraction_remaining},
                            {"band", o.thresholds.band},
                            {"rate_band", o.thresholds.rate_band},
                            {"hold_time", o.thresholds.hold_time}}}};
  j["velocity_pid"] = {{"outer", pid_to_json(s.velocity_pid.outer)},
                       {"inner", pid_to_json(s.velocity_pid.inner)}};
  j["orientation_pid"] = {{"outer", pid_to_json(s.orientation_pid.outer)},
                          {"inner", pid_to_json(s.orientation_pid.inner)}};
  j["metrics"] = {{"band_fraction", s.metrics.band_fraction},
                  {"band_floor", s.metrics.band_floor},
                  {"tracking_start", s.metrics.tracking_start}};
  return j.dump(2);
}

Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return scenario_from_json(read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics

StepMetrics step_metrics(const std::vector<double>& t, const std::vector<double>& y,
                         const std::vector<double>& target, std::size_t begin, std::size_t end,
                         double from, const MetricsConfig& config) {
  StepMetrics m;
  m.t_step = t[begin];
  m.from = from;
  m.to = target[begin];
  const double step = m.to - m.from;
  const double dir = step >= 0.0 ? 1.0 : -1.0;
  const double mag = std::abs(step);
  const double band = std::max(config.band_fraction * mag, config.band_floor);

  std::optional<std::size_t> rise;
  double peak = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> last_out;
  for (std::size_t i = begin; i < end; ++i) {
    const double progress = dir * (y[i] - m.from);
    if (!rise && progress >= 0.9 * mag) rise = i;
    peak = std::max(peak, dir * (y[i] - m.to));
    if (std::abs(y[i] - target[i]) > band) last_out = i;
  }

  std::size_t rmse_begin = begin;
  if (rise && mag > 0.0) {
    m.t_r = t[*rise] - m.t_step;
    m.sigma = std::max(0.0, peak / mag * 100.0);
    if (!last_out) {
      m.t_s = 0.0;
    } else if (*last_out + 1 < end) {
      m.t_s = t[*last_out + 1] - m.t_step;
      rmse_begin = *last_out + 1;
    }
    if (m.t_s && *m.t_s < *m.t_r) m.t_s = m.t_r;
  }
  double sum = 0.0;
  for (std::size_t i = rmse_begin; i < end; ++i) sum += (y[i] - target[i]) * (y[i] - target[i]);
  m.e_rmse = end > rmse_begin ? std::sqrt(sum / static_cast<double>(end - rmse_begin)) : 0.0;
  return m;
}

namespace {

constexpr double kTargetChange = 1e-12;

SignalMetrics signal_metrics(const std::vector<double>& t, const std::vector<double>& y,
                             const std::vector<double>& target, const std::vector<double>& angle,
                             double angle_scale, bool continuous, const MetricsConfig& config) {
  SignalMetrics m;
  const std::size_t n = t.size();
  if (!continuous) {
    std::vector<std::size_t> changes;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(target[i] - target[i - 1]) > kTargetChange) changes.push_back(i);
    }
    for (std::size_t c = 0; c < changes.size(); ++c) {
      const std::size_t end = c + 1 < changes.size() ? changes[c + 1] : n;
      m.steps.push_back(step_metrics(t, y, target, changes[c], end, target[changes[c] - 1], config));
    }
  }
  if (!m.steps.empty()) {
    m.t_r = m.steps.front().t_r;
    m.sigma = m.steps.front().sigma;
    m.t_s = m.steps.front().t_s;
    m.e_rmse = m.steps.back().e_rmse;
  } else {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (t[i] < config.tracking_start) continue;
      sum += (y[i] - target[i]) * (y[i] - target[i]);
      ++count;
    }
    m.e_rmse = count > 0 ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
  }

  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rate =
        i == 0 ? 0.0 : (angle[i] - angle[i - 1]) * angle_scale / (t[i] - t[i - 1]);
    if (i == 0) {
      m.rate_min = m.rate_max = rate;
    } else {
      m.rate_min = std::min(m.rate_min, rate);
      m.rate_max = std::max(m.rate_max, rate);
    }
    abs_sum += std::abs(rate);
  }
  m.rate_aa = n > 0 ? abs_sum / static_cast<double>(n) : 0.0;
  return m;
}

}  // namespace

MetricsInput metrics_input(const Scenario& s) {
  MetricsInput in;
  in.v_continuous = s.trajectory.has_value() || s.v_profile.continuous();
  in.phi_continuous = s.trajectory.has_value() || s.phi_profile.continuous();
  in.config = s.metrics;
  return in;
}

Metrics compute_metrics(const std::vector<TelemetryRow>& rows, const MetricsInput& input) {
  if (rows.empty()) throw UndefinedMetricError("compute_metrics: empty telemetry");
  const std::size_t n = rows.size();
  std::vector<double> t(n), v(n), v_d(n), theta(n), phi(n), phi_d(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = rows[i].t;
    v[i] = rows[i].v;
    v_d[i] = rows[i].v_d;
    theta[i] = rows[i].theta;
    phi[i] = rows[i].phi;
    phi_d[i] = rows[i].phi_d;
  }
  Metrics m;
  m.velocity = signal_metrics(t, v, v_d, theta, 1.0, input.v_continuous, input.config);
  m.roll = signal_metrics(t, phi, phi_d, phi, 1.0, input.phi_continuous, input.config);

  double energy = 0.0;
  double di1 = 0.0;
  double di2 = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = t[i] - t[i - 1];
    const double alpha_rate = (rows[i].alpha - rows[i - 1].alpha) / dt;
    const double beta_rate = (rows[i].beta - rows[i - 1].beta) / dt;
    energy += (std::abs(rows[i].tau1 * alpha_rate) + std::abs(rows[i].tau2 * beta_rate)) * dt;
    di1 += std::abs(rows[i].I1 - rows[i - 1].I1) / dt;
    di2 += std::abs(rows[i].I2 - rows[i - 1].I2) / dt;
  }
  m.energy_Q = energy;
  if (n > 1) {
    m.i_aa_1 = di1 / static_cast<double>(n - 1);
    m.i_aa_2 = di2 / static_cast<double>(n - 1);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Closed loop

MLPParams default_beta_model(const RobotParams& robot, std::uint64_t seed) {
  LMOptions opts;
  opts.seed = seed;
  const std::vector<double> vg = default_v_grid();
  const std::vector<double> pg = default_phi_grid();
  return train_beta_model(robot, vg, pg, opts).params;
}

ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed) {
  return run_scenario(scenario, seed, default_beta_model(scenario.robot, seed));
}

ScenarioResult run_scenario(const Scenario& scenario, std::uint64_t seed, const MLPParams& mlp) {
  scenario.validate();
  const RobotParams& model = scenario.robot;
  const RobotParams plant = perturb_mass(model, scenario.mass_perturbation);
  const double u_max = model.tau_max;

  VelocityControllerConfig vcfg = scenario.velocity_mpc;
  vcfg.freeze_disturbance = scenario.freeze_eso;
  OrientationControllerConfig ocfg = scenario.orientation_mpc;
  ocfg.fixed_weights = scenario.fixed_weights;
  const EsoMpcController velocity(model, vcfg, kControlPeriod, -u_max, u_max);
  const PwmpcController orientation(model, ocfg, mlp, kControlPeriod, -u_max, u_max);

  EsoMpcState vstate = velocity.initial_state();
  PwmpcState ostate = orientation.initial_state();
  CascadeState vpid;
  CascadeState opid;

  ScenarioResult result;
  result.scenario = scenario;
  result.seed = seed;

  const int substeps = static_cast<int>(std::lround(kControlPeriod / kPlantDt));
  const auto cycles = static_cast<long>(std::lround(scenario.duration / kControlPeriod));
  result.rows.reserve(static_cast<std::size_t>(cycles) + 1);

  GeneralizedState state;
  Pose pose = scenario.trajectory ? scenario.trajectory->initial_pose() : Pose{};
  const double quarter =
      scenario.trajectory && scenario.trajectory->kind == TrajectoryRef::Kind::Circle
          ? 0.5 * std::numbers::pi / std::abs(scenario.trajectory->omega)
          : 0.0;

  for (long k = 0; k <= cycles; ++k) {
    const double t = static_cast<double>(k) * kControlPeriod;
    const double v = state.qdot(kX);
    const double phi = state.q(kPhi);

    double v_d = scenario.v_profile.at(t);
    double phi_d = scenario.phi_profile.at(t);
    if (scenario.trajectory) {
      const GuidanceCommand cmd = guidance_step(*scenario.trajectory, t, pose, v, model.r);
      v_d = cmd.v_d;
      phi_d = cmd.phi_d;
      if (t >= quarter && scenario.trajectory->kind == TrajectoryRef::Kind::Circle) {
        const double err = std::abs(std::hypot(pose.x - scenario.trajectory->cx,
                                               pose.y - scenario.trajectory->cy) -
                                    scenario.trajectory->radius);
        result.path_error_max = std::max(result.path_error_max.value_or(0.0), err);
      }
    }

    double tau1 = 0.0;
    if (scenario.velocity_controller == ControllerKind::Mpc) {
      const LongitudinalMeasurement meas{state.q(kAlpha), state.qdot(kAlpha), state.q(kX), v};
      auto [out, next] = velocity.step(vstate, v_d, meas);
      tau1 = out.tau;
      vstate = std::move(next);
      if (out.flagged) ++result.flagged_cycles;
    } else {
      const CascadeOutput out = cascade_step(scenario.velocity_pid, vpid, v_d, v,
                                             state.q(kAlpha), kControlPeriod);
      tau1 = out.output;
      vpid = out.state;
    }

    double tau2 = 0.0;
    int phase = -1;
    if (scenario.orientation_controller == ControllerKind::Mpc) {
      auto [out, next] = orientation.step(ostate, phi_d, state);
      tau2 = out.tau;
      ostate = std::move(next);
      phase = static_cast<int>(ostate.tracker.phase);
      if (out.flagged) ++result.flagged_cycles;
    } else {
      const CascadeOutput out = cascade_step(scenario.orientation_pid, opid, phi_d, phi,
                                             state.q(kBeta), kControlPeriod);
      tau2 = out.output;
      opid = out.state;
    }

    const Eigen::Vector2d tau(tau1, tau2);
    const Telemetry tel = make_telemetry(model, t, state, tau);
    TelemetryRow row;
    row.t = t;
    row.v = tel.v;
    row.v_d = v_d;
    row.alpha = state.q(kAlpha);
    row.beta = state.q(kBeta);
    row.theta = tel.theta;
    row.phi = phi;
    row.phi_d = phi_d;
    row.tau1 = tau1;
    row.tau2 = tau2;
    row.I1 = tel.current(0);
    row.I2 = tel.current(1);
    row.phase = phase;
    result.rows.push_back(row);
    result.poses.push_back(pose);
    if (k == cycles) break;

    for (int s = 0; s < substeps; ++s) {
      const double ts = t + s * kPlantDt;
      Eigen::Vector2d applied = tau;
      if (ts >= scenario.disturbance_start) applied(0) += scenario.disturbance_torque;
      pose = integrate_pose(pose, state.qdot(kX), state.q(kPhi), plant.r, kPlantDt);
      state = plant_step(plant, scenario.friction, state, applied, kPlantDt);
    }
  }

  result.metrics = compute_metrics(result.rows, metrics_input(scenario));
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kCsvHeader = "t,v,v_d,alpha,beta,theta,phi,phi_d,tau1,tau2,I1,I2,phase";

void append_number(std::string& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

json step_to_json(const StepMetrics& s) {
  return {{"t_step", s.t_step},      {"from", s.from},
          {"to", s.to},              {"t_r", optional_number(s.t_r)},
          {"sigma", optional_number(s.sigma)}, {"t_s", optional_number(s.t_s)},
          {"e_rmse", s.e_rmse}};
}

json signal_to_json(const SignalMetrics& m) {
  json steps = json::array();
  for (const StepMetrics& s : m.steps) steps.push_back(step_to_json(s));
  return {{"t_r", optional_number(m.t_r)},
          {"sigma", optional_number(m.sigma)},
          {"t_s", optional_number(m.t_s)},
          {"e_rmse", m.e_rmse},
          {"rate_range", {m.rate_min, m.rate_max}},
          {"rate_aa", m.rate_aa},
          {"steps", steps}};
}

}  // namespace

std::string telemetry_csv(const std::vector<TelemetryRow>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const TelemetryRow& r : rows) {
    for (double x : {r.t, r.v, r.v_d, r.alpha, r.beta, r.theta, r.phi, r.phi_d, r.tau1, r.tau2,
                     r.I1, r.I2}) {
      append_number(out, x);
      out += ',';
    }
    out += std::to_string(r.phase);
    out += '\n';
  }
  return out;
}

std::vector<TelemetryRow> parse_telemetry_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::invalid_argument("telemetry csv: unexpected header");
  }
  std::vector<TelemetryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 13) {
      throw std::invalid_argument("telemetry csv: line " + std::to_string(line_no) +
                                  " has " + std::to_string(fields.size()) + " fields");
    }
    double values[12];
    for (int i = 0; i < 12; ++i) values[i] = std::stod(fields[i]);
    TelemetryRow r{values[0], values[1], values[2], values[3], values[4],  values[5], values[6],
                   values[7], values[8], values[9], values[10], values[11], std::stoi(fields[12])};
    rows.push_back(r);
  }
  return rows;
}

std::string metrics_json(const ScenarioResult& result) {
  const Metrics& m = result.metrics;
  json j;
  j["scenario"] = result.scenario.name;
  j["seed"] = result.seed;
  j["velocity"] = signal_to_json(m.velocity);
  j["roll"] = signal_to_json(m.roll);
  j["energy_Q"] = m.energy_Q;
  j["i_aa"] = {m.i_aa_1, m.i_aa_2};
  j["flagged_cycles"] = result.flagged_cycles;
  j["path_error_max"] = optional_number(result.path_error_max);
  return j.dump(2);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                        ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void export_results(const ScenarioResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string& name = result.scenario.name;
  write_file_atomic(dir / (name + ".csv"), telemetry_csv(result.rows));
  write_file_atomic(dir / (name + "_metrics.json"), metrics_json(result) + "\n");
  write_file_atomic(dir / (name + "_scenario.json"),
                    scenario_to_json(result.scenario, result.seed) + "\n");
}

}  // namespace sphero
