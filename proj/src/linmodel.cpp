#include "sphero/linmodel.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

struct AxisCoords {
  int first;   // alpha or beta
  int second;  // x or phi
};

AxisCoords coords_of(Axis axis) {
  return axis == Axis::Longitudinal ? AxisCoords{kAlpha, kX} : AxisCoords{kBeta, kPhi};
}

Eigen::Matrix2d axis_mass(const RobotParams& p, Axis axis, const Eigen::Vector4d& q) {
  const Eigen::Matrix4d m = mass_matrix(p, q);
  return axis == Axis::Longitudinal ? Eigen::Matrix2d(m.topLeftCorner<2, 2>())
                                    : Eigen::Matrix2d(m.bottomRightCorner<2, 2>());
}

Eigen::Matrix2d inverse_checked(const Eigen::Matrix2d& m) {
  const double det = m.determinant();
  if (std::abs(det) < 1e-12) throw SingularMassError("sub-model mass block is singular");
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

double friction_at(const FrictionLinearization& fr, const Eigen::Vector4d& s,
                   const Eigen::Vector4d& s_op) {
  return fr.force + fr.gradient.dot(s - s_op);
}

}  // namespace

Eigen::Vector4d axis_state(const GeneralizedState& state, Axis axis) {
  const auto c = coords_of(axis);
  return {state.q(c.first), state.qdot(c.first), state.q(c.second), state.qdot(c.second)};
}

GeneralizedState with_axis_state(GeneralizedState base, Axis axis, const Eigen::Vector4d& s) {
  const auto c = coords_of(axis);
  base.q(c.first) = s(0);
  base.qdot(c.first) = s(1);
  base.q(c.second) = s(2);
  base.qdot(c.second) = s(3);
  return base;
}

Eigen::Vector4d axis_vector_field(const RobotParams& params, Axis axis,
                                  const GeneralizedState& op, const Eigen::Vector4d& s, double u,
                                  const FrictionLinearization& friction) {
  const GeneralizedState state = with_axis_state(op, axis, s);
  const double force = friction_at(friction, s, axis_state(op, axis));
  const Eigen::Vector2d acc = axis_accelerations(params, axis, state, u, force);
  return {s(1), acc(0), s(3), acc(1)};
}

ContinuousModel linearize(const RobotParams& p, Axis axis, const GeneralizedState& op,
                          const FrictionLinearization& friction) {
  const Eigen::Vector4d s_op = axis_state(op, axis);
  const Eigen::Matrix2d m = axis_mass(p, axis, op.q);
  const Eigen::Matrix2d m_inv = inverse_checked(m);

  const double a = s_op(0);   // alpha or beta
  const double ad = s_op(1);
  const double cd = s_op(3);  // xdot or phidot
  const double sa = std::sin(a);
  const double ca = std::cos(a);
  const double mgl = p.m_p * p.g * p.l;
  const double mrl = p.m_p * p.r * p.l;
  const double z = p.zeta;
  const Eigen::Vector4d& dF = friction.gradient;

  // dN/ds for the two rows of the sub-model, columns ordered like s.
  Eigen::Matrix<double, 2, 4> dN = Eigen::Matrix<double, 2, 4>::Zero();
  // dM/d(first coordinate); M does not depend on the other sub-states.
  Eigen::Matrix2d dM = Eigen::Matrix2d::Zero();
  if (axis == Axis::Longitudinal) {
    const double cb = std::cos(op.q(kBeta));
    dN(0, 0) = mgl * ca * cb - z * cd * sa / p.r;
    dN(0, 1) = z;
    dN(0, 3) = z * ca / p.r;
    dN(1, 0) = -mrl * ad * ad * ca - z * ad * sa;
    dN(1, 1) = -2.0 * mrl * ad * sa + z * ca;
    dN(1, 3) = z / p.r;
    dM(0, 1) = -p.m_p * p.l * sa;
    dM(1, 0) = -mrl * sa;
  } else {
    const double calpha = std::cos(op.q(kAlpha));
    dN(0, 0) = mgl * calpha * ca - z * cd * sa;
    dN(0, 1) = z;
    dN(0, 3) = z * ca;
    dN(1, 0) = -mrl * ad * ad * ca - z * ad * sa;
    dN(1, 1) = -2.0 * mrl * ad * sa + z * ca;
    dN(1, 3) = z;
    dM(0, 1) = -mrl * sa;
    dM(1, 0) = -mrl * sa;
  }
  // Friction enters the second row as F r.
  dN.row(1) += p.r * dF.transpose();

  const Eigen::Vector4d f_op = axis_vector_field(p, axis, op, s_op, 0.0, friction);
  const Eigen::Vector2d acc_op(f_op(1), f_op(3));

  // d(M^-1 g)/ds_j = M^-1 (dg/ds_j - dM/ds_j acc), with g = E u - N.
  Eigen::Matrix<double, 2, 4> dacc = -m_inv * dN;
  dacc.col(0) -= m_inv * dM * acc_op;

  ContinuousModel model;
  model.A = Eigen::MatrixXd::Zero(4, 4);
  model.A(0, 1) = 1.0;
  model.A(2, 3) = 1.0;
  model.A.row(1) = dacc.row(0);
  model.A.row(3) = dacc.row(1);

  const Eigen::Vector2d b = m_inv * Eigen::Vector2d::Ones();
  model.B = Eigen::VectorXd::Zero(4);
  model.B(1) = b(0);
  model.B(3) = b(1);

  model.C = f_op - model.A * s_op;
  return model;
}

DiscreteModel discretize(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                         const Eigen::VectorXd& C, double T_s) {
  if (!(T_s > 0.0)) throw std::invalid_argument("discretize: T_s must be positive");
  DiscreteModel d;
  d.A_d = Eigen::MatrixXd::Identity(A.rows(), A.cols()) + A * T_s;
  d.B_d = B * T_s;
  d.C_d = C * T_s;
  return d;
}

LinearModel make_linear_model(const RobotParams& params, Axis axis, const GeneralizedState& op,
                              double T_s, const FrictionLinearization& friction) {
  const ContinuousModel c = linearize(params, axis, op, friction);
  const DiscreteModel d = discretize(c.A, c.B, c.C, T_s);
  return LinearModel{c.A, c.B, c.C, d.A_d, d.B_d, d.C_d, T_s, axis};
}

Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric_jacobian: h must be positive");
  const Eigen::VectorXd f0 = f(point);
  Eigen::MatrixXd jac(f0.size(), point.size());
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    Eigen::VectorXd plus = point;
    Eigen::VectorXd minus = point;
    plus(j) += h;
    minus(j) -= h;
    jac.col(j) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return jac;
}

LinearModel select_states(const LinearModel& model, std::span<const int> keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  LinearModel out;
  out.A.resize(n, n);
  out.A_d.resize(n, n);
  out.B.resize(n);
  out.B_d.resize(n);
  out.C.resize(n);
  out.C_d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.A(i, j) = model.A(keep[i], keep[j]);
      out.A_d(i, j) = model.A_d(keep[i], keep[j]);
    }
    out.B(i) = model.B(keep[i]);
    out.B_d(i) = model.B_d(keep[i]);
    out.C(i) = model.C(keep[i]);
    out.C_d(i) = model.C_d(keep[i]);
  }
  out.T_s = model.T_s;
  out.axis = model.axis;
  return out;
}

}  // namespace sphero
