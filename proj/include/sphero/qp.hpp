#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sphero/linmodel.hpp"

namespace sphero {

/// Box applied to every predicted state.
struct StateBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct MPCConfig {
  int N_p = 50;
  int N_c = 10;
  Eigen::MatrixXd Q;   // stage weight, n x n
  Eigen::MatrixXd P;   // terminal weight, n x n
  double R = 1.0;      // input weight
  double u_min = -10.0;
  double u_max = 10.0;
  std::optional<double> du_max;
  std::optional<StateBox> state_box;

  /// Throws DimensionMismatchError or std::invalid_argument.
  void validate(Eigen::Index n) const;
};

/// Stacked prediction X = A_qp x0 + B_qp U + C_qp with X = [x_1; ...; x_Np].
struct PredictionMatrices {
  Eigen::MatrixXd A_qp;
  Eigen::MatrixXd B_qp;
  Eigen::VectorXd C_qp;
};

/// min 0.5 U'HU + U'f  s.t.  d_lo <= D U <= d_hi.  Infinite bounds are allowed.
struct QPProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd D;
  Eigen::VectorXd d_lo;
  Eigen::VectorXd d_hi;

  Eigen::Index num_vars() const { return H.rows(); }
  Eigen::Index num_constraints() const { return D.rows(); }
  double objective(const Eigen::VectorXd& U) const { return 0.5 * U.dot(H * U) + U.dot(f); }
};

enum class QPStatus { Optimal, Infeasible, MaxIterations };

const char* to_string(QPStatus status);

/// Nonnegative multipliers of the lower and upper sides of each row, so that
/// H U + f + D'(upper - lower) = 0 at a KKT point.
struct Multipliers {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct QPSolution {
  Eigen::VectorXd U;
  Multipliers lambda;
  QPStatus status = QPStatus::Optimal;
  int iterations = 0;
};

struct KKTResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

PredictionMatrices build_prediction(const LinearModel& model, const MPCConfig& cfg);

/// Condensed QP of the tracking cost. When `previous_input` is set and
/// cfg.du_max is configured, the first rate row bounds u_0 - previous_input.
QPProblem condense(const PredictionMatrices& pred, const MPCConfig& cfg,
                   const Eigen::VectorXd& x0, const Eigen::VectorXd& X_ref,
                   const Eigen::VectorXd& U_ref,
                   std::optional<double> previous_input = std::nullopt);

/// Dense dual active-set solver (Goldfarb-Idnani). A warm start seeds the
/// initial working set with the constraints active at that point.
QPSolution solve_qp(const QPProblem& qp,
                    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

KKTResidual kkt_residual(const QPProblem& qp, const Eigen::VectorXd& U,
                         const Multipliers& lambda);

}  // namespace sphero
