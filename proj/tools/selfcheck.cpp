#include "selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sphero/dynamics.hpp"
#include "sphero/linmodel.hpp"
#include "sphero/qp.hpp"

namespace sphero::tools {

namespace {

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

}  // namespace

CheckResult check_jacobians(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-0.2, 0.2);
  std::uniform_real_distribution<double> rate(-0.5, 0.5);
  const RobotParams params;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    GeneralizedState op;
    for (int i = 0; i < 4; ++i) {
      op.q(i) = angle(rng);
      op.qdot(i) = rate(rng);
    }
    for (Axis axis : {Axis::Longitudinal, Axis::Transverse}) {
      FrictionLinearization friction;
      friction.force = axis == Axis::Transverse ? rate(rng) : 0.0;
      const ContinuousModel lin = linearize(params, axis, op, friction);
      const Eigen::Vector4d s0 = axis_state(op, axis);
      const auto f = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return axis_vector_field(params, axis, op, z.head<4>(), z(4), friction);
      };
      Eigen::VectorXd point(5);
      point << s0, 0.0;
      const Eigen::MatrixXd J = numeric_jacobian(f, point, 1e-6);
      Eigen::MatrixXd analytic(4, 5);
      analytic << lin.A, lin.B;
      const Eigen::ArrayXXd denom = analytic.cwiseAbs().array().max(1.0);
      worst = std::max(worst, ((analytic - J).cwiseAbs().array() / denom).maxCoeff());
    }
  }
  return {"jacobian", worst < 1e-5, format("max relative error %.3e", worst)};
}

CheckResult check_qp_kkt(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 8);
  double worst = 0.0;
  int failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = dim(rng);
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = uni(rng);
    QPProblem qp;
    qp.H = G * G.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    qp.f = Eigen::VectorXd::NullaryExpr(n, [&] { return 3.0 * uni(rng); });
    qp.D = Eigen::MatrixXd::Identity(n, n);
    qp.d_lo = Eigen::VectorXd::Constant(n, -0.5);
    qp.d_hi = Eigen::VectorXd::Constant(n, 0.5);
    const QPSolution sol = solve_qp(qp);
    if (sol.status != QPStatus::Optimal) {
      ++failures;
      continue;
    }
    const KKTResidual r = kkt_residual(qp, sol.U, sol.lambda);
    worst = std::max({worst, r.stationarity, r.feasibility, r.complementarity});
  }
  return {"qp_kkt", failures == 0 && worst < 1e-8,
          format("max KKT residual %.3e, failures %.0f", worst, failures)};
}

CheckResult check_energy() {
  RobotParams params;
  params.zeta = 0.0;
  FrictionConfig friction;
  friction.x_enabled = false;
  friction.y_enabled = false;
  GeneralizedState s;
  s.q << 0.3, 0.0, -0.2, 0.1;
  s.qdot << 0.0, 0.2, 0.1, 0.0;
  const double e0 = mechanical_energy(params, s);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    s = plant_step(params, friction, s, Eigen::Vector2d::Zero(), 1e-3);
    worst = std::max(worst, std::abs(mechanical_energy(params, s) - e0) / e0);
  }
  return {"energy", worst < 1e-3, format("max relative drift %.3e over 10 s", worst)};
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  return {check_jacobians(seed), check_qp_kkt(seed + 1), check_energy()};
}

}  // namespace sphero::tools
