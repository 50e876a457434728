#pragma once

#include <functional>
#include <span>

#include <Eigen/Core>

#include "sphero/dynamics.hpp"

namespace sphero {

/// Continuous affine model xdot = A x + B u + C.
struct ContinuousModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::VectorXd C;
};

/// Forward-Euler discretization x+ = A_d x + B_d u + C_d.
struct DiscreteModel {
  Eigen::MatrixXd A_d;
  Eigen::VectorXd B_d;
  Eigen::VectorXd C_d;
};

/// Sub-model used as an MPC prediction model.
///
/// Longitudinal state is [alpha, alphadot, x, xdot]; transverse state is
/// [beta, betadot, phi, phidot].
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::VectorXd C;
  Eigen::MatrixXd A_d;
  Eigen::VectorXd B_d;
  Eigen::VectorXd C_d;
  double T_s = 0.0;
  Axis axis = Axis::Longitudinal;

  Eigen::Index size() const { return A_d.rows(); }
};

/// Affine model of the friction force acting on a sub-model,
/// F(s) = force + gradient . (s - s_op).
struct FrictionLinearization {
  double force = 0.0;
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
};

/// Sub-state of a generalized state in the axis ordering above.
Eigen::Vector4d axis_state(const GeneralizedState& state, Axis axis);

/// Writes a sub-state back into a copy of `base`.
GeneralizedState with_axis_state(GeneralizedState base, Axis axis, const Eigen::Vector4d& s);

/// Nonlinear sub-model vector field: returns d/dt of the sub-state.
/// Coordinates of the other axis are frozen at their values in `op`.
Eigen::Vector4d axis_vector_field(const RobotParams& params, Axis axis,
                                  const GeneralizedState& op, const Eigen::Vector4d& s, double u,
                                  const FrictionLinearization& friction);

/// Analytic Jacobians of the sub-model at `op`. C is chosen so that the
/// affine model reproduces the vector field at `op` with zero input; at the
/// origin it equals f evaluated there.
ContinuousModel linearize(const RobotParams& params, Axis axis, const GeneralizedState& op,
                          const FrictionLinearization& friction = {});

DiscreteModel discretize(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                         const Eigen::VectorXd& C, double T_s);

/// linearize followed by discretize.
LinearModel make_linear_model(const RobotParams& params, Axis axis, const GeneralizedState& op,
                              double T_s, const FrictionLinearization& friction = {});

/// Central-difference Jacobian, one column per coordinate of `point`.
Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& point, double h);

/// Restriction of a model to a subset of its states. The dropped states must
/// not feed the kept ones (e.g. the cyclic x coordinate).
LinearModel select_states(const LinearModel& model, std::span<const int> keep);

}  // namespace sphero
