#include "sphero/linmodel.hpp"

#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"

namespace sphero {
namespace {

using testing::Gen;

constexpr double kTs = 0.02;

double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::ArrayXXd denom = a.cwiseAbs().array().max(1.0);
  return ((a - b).cwiseAbs().array() / denom).maxCoeff();
}

Eigen::MatrixXd finite_difference(const RobotParams& p, Axis axis, const GeneralizedState& op,
                                  const FrictionLinearization& fr, double h) {
  const auto f = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return axis_vector_field(p, axis, op, z.head<4>(), z(4), fr);
  };
  Eigen::VectorXd point(5);
  point << axis_state(op, axis), 0.0;
  return numeric_jacobian(f, point, h);
}

TEST(Linearize, KinematicRowsAreExact) {
  Gen gen(21);
  const RobotParams p;
  for (int trial = 0; trial < 20; ++trial) {
    for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
      const ContinuousModel m = linearize(p, axis, gen.small_state());
      EXPECT_TRUE(m.A.row(0).isApprox(Eigen::RowVector4d(0, 1, 0, 0), 0.0));
      EXPECT_TRUE(m.A.row(2).isApprox(Eigen::RowVector4d(0, 0, 0, 1), 0.0));
      EXPECT_EQ(m.B(0), 0.0);
      EXPECT_EQ(m.B(2), 0.0);
    }
  }
}

TEST(Linearize, OffsetVanishesAtOrigin) {
  const RobotParams p;
  for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
    EXPECT_TRUE(linearize(p, axis, GeneralizedState{}).C.isZero(0.0));
  }
}

TEST(Linearize, OriginGravityStiffnessMatchesFiniteDifference) {
  RobotParams p;
  p.zeta = 0.0;
  const ContinuousModel m = linearize(p, Axis::Transverse, GeneralizedState{});
  const Eigen::MatrixXd J = finite_difference(p, Axis::Transverse, GeneralizedState{}, {}, 1e-6);
  EXPECT_EQ(m.A(1, 2), 0.0);
  EXPECT_LT(std::abs(m.A(1, 0) - J(1, 0)) / std::abs(m.A(1, 0)), 1e-6);
  EXPECT_LT(std::abs(m.A(3, 0) - J(3, 0)) / std::abs(m.A(3, 0)), 1e-6);
}

TEST(Linearize, JacobiansMatchFiniteDifferences) {
  Gen gen(22);
  const RobotParams p;
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState op = gen.small_state();
    for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
      FrictionLinearization fr;
      fr.force = gen.uniform(-3, 3);
      fr.gradient = gen.vector(4, -2, 2);
      const ContinuousModel m = linearize(p, axis, op, fr);
      Eigen::MatrixXd analytic(4, 5);
      analytic << m.A, m.B;
      EXPECT_LT(max_relative_error(analytic, finite_difference(p, axis, op, fr, 1e-6)), 1e-5);
    }
  }
}

TEST(Linearize, AffineModelReproducesFieldAtOperatingPoint) {
  Gen gen(23);
  const RobotParams p;
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState op = gen.small_state();
    for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
      const ContinuousModel m = linearize(p, axis, op);
      const Eigen::Vector4d s = axis_state(op, axis);
      const Eigen::Vector4d f = axis_vector_field(p, axis, op, s, 0.0, {});
      EXPECT_LT((m.A * s + m.C - f).norm(), 1e-10);
    }
  }
}

TEST(Discretize, Examples) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
  const Eigen::VectorXd b = Eigen::Vector4d(0.0, 3.0, 0.0, -7.0);
  const DiscreteModel d = discretize(zero, b, Eigen::VectorXd::Zero(4), kTs);
  EXPECT_TRUE(d.A_d.isIdentity(0.0));
  EXPECT_EQ(d.B_d(0), 0.0);
  EXPECT_EQ(d.B_d(1), 0.02 * 3.0);
  EXPECT_EQ(d.B_d(3), 0.02 * -7.0);
}

TEST(Discretize, EulerIdentityIsBitExact) {
  Gen gen(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd A = gen.matrix(4, 4, -10, 10);
    const Eigen::VectorXd B = gen.vector(4, -5, 5);
    const Eigen::VectorXd C = gen.vector(4, -1, 1);
    const double Ts = gen.uniform(1e-3, 0.1);
    const DiscreteModel d = discretize(A, B, C, Ts);
    const Eigen::MatrixXd expect_A = Eigen::MatrixXd::Identity(4, 4) + A * Ts;
    const Eigen::VectorXd expect_B = B * Ts;
    const Eigen::VectorXd expect_C = C * Ts;
    EXPECT_TRUE(d.A_d == expect_A);
    EXPECT_TRUE(d.B_d == expect_B);
    EXPECT_TRUE(d.C_d == expect_C);
  }
  EXPECT_THROW(discretize(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
                          Eigen::VectorXd::Zero(2), 0.0),
               std::invalid_argument);
}

TEST(Discretize, OneStepErrorIsSecondOrder) {
  // Integrate the continuous model finely over one period and compare with
  // the Euler prediction; halving T_s should cut the gap about 4x.
  const RobotParams p;
  GeneralizedState op;
  op.q(kBeta) = 0.05;
  const ContinuousModel m = linearize(p, Axis::Transverse, op);
  const Eigen::Vector4d x0(0.05, 0.1, -0.02, 0.03);
  const double u = 0.3;
  auto gap = [&](double Ts) {
    Eigen::Vector4d x = x0;
    const int sub = 2000;
    const double h = Ts / sub;
    auto f = [&](const Eigen::Vector4d& z) -> Eigen::Vector4d { return m.A * z + m.B * u + m.C; };
    for (int k = 0; k < sub; ++k) {
      const Eigen::Vector4d k1 = f(x);
      const Eigen::Vector4d k2 = f(x + 0.5 * h * k1);
      const Eigen::Vector4d k3 = f(x + 0.5 * h * k2);
      const Eigen::Vector4d k4 = f(x + h * k3);
      x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const DiscreteModel d = discretize(m.A, m.B, m.C, Ts);
    return (d.A_d * x0 + d.B_d * u + d.C_d - x).norm();
  };
  const double ratio = gap(0.02) / gap(0.01);
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(NumericJacobian, LinearFunctionIsExact) {
  Gen gen(25);
  const Eigen::MatrixXd A = gen.matrix(3, 4, -2, 2);
  const auto f = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd { return A * z; };
  for (double h : {1e-3, 0.25, 1.0}) {
    const Eigen::MatrixXd J = numeric_jacobian(f, gen.vector(4, -1, 1), h);
    EXPECT_LT((J - A).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(NumericJacobian, SineAtOrigin) {
  const auto f = [](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, std::sin(z(0)));
  };
  const Eigen::MatrixXd J = numeric_jacobian(f, Eigen::VectorXd::Zero(1), 1e-5);
  EXPECT_NEAR(J(0, 0), 1.0, 1e-9);
}

TEST(NumericJacobian, AgreesWithTransverseModelAtOrigin) {
  const RobotParams p;
  const ContinuousModel m = linearize(p, Axis::Transverse, GeneralizedState{});
  Eigen::MatrixXd analytic(4, 5);
  analytic << m.A, m.B;
  EXPECT_LT(max_relative_error(analytic,
                               finite_difference(p, Axis::Transverse, GeneralizedState{}, {}, 1e-6)),
            1e-6);
}

TEST(LinearModel, AxisStateRoundTrip) {
  Gen gen(26);
  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState s = gen.small_state();
    for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
      EXPECT_TRUE(with_axis_state(s, axis, axis_state(s, axis)) == s);
    }
  }
}

TEST(LinearModel, SelectStatesDropsPosition) {
  const LinearModel full = make_linear_model(RobotParams{}, Axis::Longitudinal, {}, kTs);
  const std::array<int, 3> keep{0, 1, 3};
  const LinearModel r = select_states(full, keep);
  ASSERT_EQ(r.size(), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(r.B_d(i), full.B_d(keep[i]));
    for (int j = 0; j < 3; ++j) EXPECT_EQ(r.A_d(i, j), full.A_d(keep[i], keep[j]));
  }
  // x does not feed the accelerations, so the reduced model loses nothing.
  EXPECT_EQ(full.A(1, 2), 0.0);
  EXPECT_EQ(full.A(3, 2), 0.0);
}

}  // namespace
}  // namespace sphero
