#pragma once

#include <Eigen/Core>

namespace sphero {

/// Indices into the generalized coordinate vector q = [alpha, x, beta, phi].
enum Coord : int { kAlpha = 0, kX = 1, kBeta = 2, kPhi = 3 };

/// Longitudinal (alpha, x) or transverse (beta, phi) half of the model.
enum class Axis { Longitudinal, Transverse };

/// Physical parameters of the pendulum-driven sphere.
///
/// The defaults describe a desk-scale robot whose pendulum can hold the
/// lean angles used by the benchmark scenarios inside the small-angle band.
struct RobotParams {
  double m_s = 6.0;     // shell mass, kg
  double m_f = 7.0;     // frame mass, kg
  double m_p = 7.0;     // pendulum mass, kg
  double I_sx = 0.36;   // kg m^2
  double I_sy = 0.36;
  double I_fx = 0.08;
  double I_fy = 0.08;
  double I_px = 0.4675;
  double I_py = 0.4675;
  double r = 0.3;       // shell radius, m
  double l = 0.25;      // frame to pendulum distance, m
  double zeta = 0.02;   // viscous damping, N m s / rad
  double g = 9.81;
  double k_t = 0.5;     // motor torque constant, N m / A
  double tau_max = 10.0;

  double total_mass() const { return m_s + m_f + m_p; }

  /// Throws std::invalid_argument when a field violates its sign constraint.
  void validate() const;
};

struct GeneralizedState {
  Eigen::Vector4d q = Eigen::Vector4d::Zero();
  Eigen::Vector4d qdot = Eigen::Vector4d::Zero();

  bool operator==(const GeneralizedState&) const = default;
};

/// Ground-contact truth model used by the plant only.
struct FrictionConfig {
  double mu_c = 0.0;   // Coulomb coefficient
  double c_v = 0.0;    // viscous ground coefficient, N s / m
  bool x_enabled = true;
  bool y_enabled = true;

  void validate() const;
};

/// One telemetry sample.
struct Telemetry {
  double t = 0.0;
  GeneralizedState state;
  double theta = 0.0;     // shell pitch, x / r
  double thetadot = 0.0;
  Eigen::Vector2d tau = Eigen::Vector2d::Zero();
  Eigen::Vector2d current = Eigen::Vector2d::Zero();
  double v = 0.0;
};

Telemetry make_telemetry(const RobotParams& params, double t, const GeneralizedState& state,
                         const Eigen::Vector2d& tau);

Eigen::Matrix4d mass_matrix(const RobotParams& params, const Eigen::Vector4d& q);

/// N(q, qdot) with the ground friction forces supplied by the caller.
Eigen::Vector4d bias_vector(const RobotParams& params, const Eigen::Vector4d& q,
                            const Eigen::Vector4d& qdot, double F_fx, double F_fy);

/// Solves M(q) qddot = E tau - N as two independent 2x2 systems.
/// Throws SingularMassError when a block determinant is below 1e-12 in magnitude.
Eigen::Vector4d forward_dynamics(const RobotParams& params, const Eigen::Vector4d& q,
                                 const Eigen::Vector4d& qdot, const Eigen::Vector2d& tau,
                                 const Eigen::Vector2d& friction);

/// Accelerations of one sub-model, ordered (alpha, x) or (beta, phi).
Eigen::Vector2d axis_accelerations(const RobotParams& params, Axis axis,
                                   const GeneralizedState& state, double tau,
                                   double friction);

/// Lateral friction supplied by the centripetal force, M v^2 tan(phi) / r.
double centripetal_friction(const RobotParams& params, double v, double phi);

/// Friction forces (F_fx, F_fy) the plant applies in the given state.
Eigen::Vector2d ground_friction(const RobotParams& params, const FrictionConfig& friction,
                                const GeneralizedState& state);

/// One RK4 step of the whole-body dynamics. Torque is saturated to +-tau_max.
GeneralizedState plant_step(const RobotParams& params, const FrictionConfig& friction,
                            const GeneralizedState& state, const Eigen::Vector2d& tau,
                            double dt);

/// Kinetic plus potential energy; conserved when zeta and friction vanish.
double mechanical_energy(const RobotParams& params, const GeneralizedState& state);

/// Scales the three masses by (1 + fraction); inertias are left untouched.
RobotParams perturb_mass(RobotParams params, double fraction);

}  // namespace sphero
