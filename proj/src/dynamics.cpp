#include "sphero/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

constexpr double kSingularDet = 1e-12;

double sign_or_zero(double value) {
  if (value > 0.0) return 1.0;
  if (value < 0.0) return -1.0;
  return 0.0;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0)) {
    throw std::invalid_argument(std::string("RobotParams: ") + name + " must be positive");
  }
}

void require_nonnegative(double value, const char* name) {
  if (!(value >= 0.0)) {
    throw std::invalid_argument(std::string("RobotParams: ") + name + " must be nonnegative");
  }
}

Eigen::Vector2d solve_block(const Eigen::Matrix2d& m, const Eigen::Vector2d& rhs) {
  const double det = m.determinant();
  if (std::abs(det) < kSingularDet) {
    throw SingularMassError("mass matrix block is singular (det = " + std::to_string(det) + ")");
  }
  // Cramer's rule keeps the 2x2 solve branch free and bit-reproducible.
  return {(m(1, 1) * rhs(0) - m(0, 1) * rhs(1)) / det,
          (m(0, 0) * rhs(1) - m(1, 0) * rhs(0)) / det};
}

}  // namespace

void RobotParams::validate() const {
  require_positive(m_s, "m_s");
  require_positive(m_f, "m_f");
  require_positive(m_p, "m_p");
  require_positive(I_sx, "I_sx");
  require_positive(I_sy, "I_sy");
  require_positive(I_fx, "I_fx");
  require_positive(I_fy, "I_fy");
  require_positive(I_px, "I_px");
  require_positive(I_py, "I_py");
  require_positive(r, "r");
  require_positive(l, "l");
  require_nonnegative(zeta, "zeta");
  require_nonnegative(k_t, "k_t");
  require_nonnegative(tau_max, "tau_max");
}

void FrictionConfig::validate() const {
  if (!(mu_c >= 0.0) || !(c_v >= 0.0)) {
    throw std::invalid_argument("FrictionConfig: coefficients must be nonnegative");
  }
}

Telemetry make_telemetry(const RobotParams& params, double t, const GeneralizedState& state,
                         const Eigen::Vector2d& tau) {
  Telemetry sample;
  sample.t = t;
  sample.state = state;
  sample.theta = state.q(kX) / params.r;
  sample.thetadot = state.qdot(kX) / params.r;
  sample.tau = tau;
  sample.current = params.k_t > 0.0 ? Eigen::Vector2d(tau / params.k_t) : Eigen::Vector2d::Zero();
  sample.v = state.qdot(kX);
  return sample;
}

Eigen::Matrix4d mass_matrix(const RobotParams& p, const Eigen::Vector4d& q) {
  const double M = p.total_mass();
  const double ca = std::cos(q(kAlpha));
  const double cb = std::cos(q(kBeta));
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 0) = p.I_fy + p.I_py;
  m(0, 1) = p.m_p * p.l * ca;
  m(1, 0) = p.m_p * p.r * p.l * ca;
  m(1, 1) = M * p.r + p.I_sy / p.r;
  m(2, 2) = p.I_px;
  m(2, 3) = p.m_p * p.r * p.l * cb;
  m(3, 2) = p.m_p * p.r * p.l * cb;
  m(3, 3) = M * p.r * p.r + p.I_sx + p.I_fx;
  return m;
}

Eigen::Vector4d bias_vector(const RobotParams& p, const Eigen::Vector4d& q,
                            const Eigen::Vector4d& qd, double F_fx, double F_fy) {
  const double sa = std::sin(q(kAlpha));
  const double ca = std::cos(q(kAlpha));
  const double sb = std::sin(q(kBeta));
  const double cb = std::cos(q(kBeta));
  const double mgl = p.m_p * p.g * p.l;
  const double mrl = p.m_p * p.r * p.l;
  Eigen::Vector4d n;
  n(0) = mgl * sa * cb + p.zeta * (qd(kAlpha) + qd(kX) * ca / p.r);
  n(1) = -mrl * qd(kAlpha) * qd(kAlpha) * sa + p.zeta * (qd(kAlpha) * ca + qd(kX) / p.r) +
         F_fx * p.r;
  n(2) = mgl * ca * sb + p.zeta * (qd(kBeta) + qd(kPhi) * cb);
  n(3) = -mrl * qd(kBeta) * qd(kBeta) * sb + p.zeta * (qd(kPhi) + qd(kBeta) * cb) + F_fy * p.r;
  return n;
}

Eigen::Vector4d forward_dynamics(const RobotParams& p, const Eigen::Vector4d& q,
                                 const Eigen::Vector4d& qdot, const Eigen::Vector2d& tau,
                                 const Eigen::Vector2d& friction) {
  const Eigen::Matrix4d m = mass_matrix(p, q);
  const Eigen::Vector4d n = bias_vector(p, q, qdot, friction(0), friction(1));
  // E = [1 1 0 0; 0 0 1 1]^T
  const Eigen::Vector4d rhs(tau(0) - n(0), tau(0) - n(1), tau(1) - n(2), tau(1) - n(3));
  Eigen::Vector4d qddot;
  qddot.head<2>() = solve_block(m.topLeftCorner<2, 2>(), rhs.head<2>());
  qddot.tail<2>() = solve_block(m.bottomRightCorner<2, 2>(), rhs.tail<2>());
  return qddot;
}

Eigen::Vector2d axis_accelerations(const RobotParams& p, Axis axis, const GeneralizedState& state,
                                   double tau, double friction) {
  const Eigen::Matrix4d m = mass_matrix(p, state.q);
  if (axis == Axis::Longitudinal) {
    const Eigen::Vector4d n = bias_vector(p, state.q, state.qdot, friction, 0.0);
    return solve_block(m.topLeftCorner<2, 2>(), Eigen::Vector2d(tau - n(0), tau - n(1)));
  }
  const Eigen::Vector4d n = bias_vector(p, state.q, state.qdot, 0.0, friction);
  return solve_block(m.bottomRightCorner<2, 2>(), Eigen::Vector2d(tau - n(2), tau - n(3)));
}

double centripetal_friction(const RobotParams& p, double v, double phi) {
  return p.total_mass() * v * v * std::tan(phi) / p.r;
}

Eigen::Vector2d ground_friction(const RobotParams& p, const FrictionConfig& friction,
                                const GeneralizedState& state) {
  Eigen::Vector2d f = Eigen::Vector2d::Zero();
  const double v = state.qdot(kX);
  if (friction.x_enabled) {
    // Resisting force: positive for forward motion, entering N with +F_fx r.
    f(0) = friction.mu_c * p.total_mass() * p.g * sign_or_zero(v) + friction.c_v * v;
  }
  if (friction.y_enabled) {
    f(1) = centripetal_friction(p, v, state.q(kPhi));
  }
  return f;
}

GeneralizedState plant_step(const RobotParams& p, const FrictionConfig& friction,
                            const GeneralizedState& state, const Eigen::Vector2d& tau,
                            double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("plant_step: dt must be positive");
  const Eigen::Vector2d applied = tau.cwiseMax(-p.tau_max).cwiseMin(p.tau_max);

  auto deriv = [&](const Eigen::Vector4d& q, const Eigen::Vector4d& qd,
                   Eigen::Vector4d& dq, Eigen::Vector4d& dqd) {
    GeneralizedState s{q, qd};
    dq = qd;
    dqd = forward_dynamics(p, q, qd, applied, ground_friction(p, friction, s));
  };

  Eigen::Vector4d k1q, k1v, k2q, k2v, k3q, k3v, k4q, k4v;
  deriv(state.q, state.qdot, k1q, k1v);
  deriv(state.q + 0.5 * dt * k1q, state.qdot + 0.5 * dt * k1v, k2q, k2v);
  deriv(state.q + 0.5 * dt * k2q, state.qdot + 0.5 * dt * k2v, k3q, k3v);
  deriv(state.q + dt * k3q, state.qdot + dt * k3v, k4q, k4v);

  GeneralizedState next;
  next.q = state.q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  next.qdot = state.qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  return next;
}

double mechanical_energy(const RobotParams& p, const GeneralizedState& s) {
  const double M = p.total_mass();
  const double ca = std::cos(s.q(kAlpha));
  const double cb = std::cos(s.q(kBeta));
  const double ad = s.qdot(kAlpha);
  const double xd = s.qdot(kX);
  const double bd = s.qdot(kBeta);
  const double pd = s.qdot(kPhi);
  // The printed longitudinal row 2 is the Lagrangian x-equation scaled by r,
  // so the x-coordinate inertia is M + I_sy / r^2.
  const double kinetic_long = 0.5 * (p.I_fy + p.I_py) * ad * ad + p.m_p * p.l * ca * ad * xd +
                              0.5 * (M + p.I_sy / (p.r * p.r)) * xd * xd;
  const double kinetic_trans = 0.5 * p.I_px * bd * bd + p.m_p * p.r * p.l * cb * bd * pd +
                               0.5 * (M * p.r * p.r + p.I_sx + p.I_fx) * pd * pd;
  const double potential = p.m_p * p.g * p.l * (1.0 - ca * cb);
  return kinetic_long + kinetic_trans + potential;
}

RobotParams perturb_mass(RobotParams params, double fraction) {
  params.m_s *= 1.0 + fraction;
  params.m_f *= 1.0 + fraction;
  params.m_p *= 1.0 + fraction;
  return params;
}

}  // namespace sphero
