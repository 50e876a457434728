#include "sphero/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionMismatchError(std::string("MPCConfig: ") + name + " must be " +
                                 std::to_string(n) + "x" + std::to_string(n));
  }
}

}  // namespace

const char* to_string(QPStatus status) {
  switch (status) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::Infeasible: return "infeasible";
    case QPStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

void MPCConfig::validate(Eigen::Index n) const {
  if (N_c < 1 || N_c > N_p) throw std::invalid_argument("MPCConfig: need 1 <= N_c <= N_p");
  require_square(Q, n, "Q");
  require_square(P, n, "P");
  if (!(R >= 0.0)) throw std::invalid_argument("MPCConfig: R must be nonnegative");
  if (!(u_min <= u_max)) throw std::invalid_argument("MPCConfig: u_min > u_max");
  if (du_max && !(*du_max >= 0.0)) throw std::invalid_argument("MPCConfig: du_max < 0");
  if (state_box && (state_box->lower.size() != n || state_box->upper.size() != n)) {
    throw DimensionMismatchError("MPCConfig: state box dimension");
  }
}

PredictionMatrices build_prediction(const LinearModel& model, const MPCConfig& cfg) {
  const Eigen::Index n = model.size();
  cfg.validate(n);
  if (model.B_d.size() != n || model.C_d.size() != n) {
    throw DimensionMismatchError("build_prediction: model matrices disagree in size");
  }
  const int Np = cfg.N_p;
  const int Nc = cfg.N_c;

  // powers[k] = A_d^k, k = 0..Np
  std::vector<Eigen::MatrixXd> powers(Np + 1);
  powers[0] = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= Np; ++k) powers[k] = model.A_d * powers[k - 1];

  PredictionMatrices pred;
  pred.A_qp.resize(n * Np, n);
  pred.B_qp = Eigen::MatrixXd::Zero(n * Np, Nc);
  pred.C_qp.resize(n * Np);

  Eigen::VectorXd c_acc = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < Np; ++k) {
    // block row k predicts x_{k+1}
    pred.A_qp.middleRows(k * n, n) = powers[k + 1];
    c_acc = model.A_d * c_acc + model.C_d;
    pred.C_qp.segment(k * n, n) = c_acc;
    for (int j = 0; j < Nc && j <= k; ++j) {
      if (j < Nc - 1) {
        pred.B_qp.block(k * n, j, n, 1) = powers[k - j] * model.B_d;
      } else {
        // the last optimized input is held over the rest of the horizon
        Eigen::VectorXd held = Eigen::VectorXd::Zero(n);
        for (int i = j; i <= k; ++i) held += powers[k - i] * model.B_d;
        pred.B_qp.block(k * n, j, n, 1) = held;
      }
    }
  }
  return pred;
}

QPProblem condense(const PredictionMatrices& pred, const MPCConfig& cfg,
                   const Eigen::VectorXd& x0, const Eigen::VectorXd& X_ref,
                   const Eigen::VectorXd& U_ref, std::optional<double> previous_input) {
  const Eigen::Index n = pred.A_qp.cols();
  const int Np = cfg.N_p;
  const int Nc = cfg.N_c;
  cfg.validate(n);
  if (pred.A_qp.rows() != n * Np || pred.B_qp.cols() != Nc || x0.size() != n ||
      X_ref.size() != n * Np || U_ref.size() != Nc) {
    throw DimensionMismatchError("condense: dimensions disagree with the configuration");
  }

  const Eigen::VectorXd free_response = pred.A_qp * x0 + pred.C_qp;
  const Eigen::VectorXd error = free_response - X_ref;

  // Q_qp is block diagonal, so apply it block by block.
  Eigen::MatrixXd QB(n * Np, Nc);
  Eigen::VectorXd Qe(n * Np);
  for (int k = 0; k < Np; ++k) {
    const Eigen::MatrixXd& W = (k == Np - 1) ? cfg.P : cfg.Q;
    QB.middleRows(k * n, n).noalias() = W * pred.B_qp.middleRows(k * n, n);
    Qe.segment(k * n, n).noalias() = W * error.segment(k * n, n);
  }

  QPProblem qp;
  qp.H = 2.0 * (pred.B_qp.transpose() * QB);
  qp.H.diagonal().array() += 2.0 * cfg.R;
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  qp.f = 2.0 * (pred.B_qp.transpose() * Qe - cfg.R * U_ref);

  const bool rate_rows = cfg.du_max.has_value();
  const bool first_rate_row = rate_rows && previous_input.has_value();
  const Eigen::Index n_box = Nc;
  const Eigen::Index n_rate = rate_rows ? (Nc - 1 + (first_rate_row ? 1 : 0)) : 0;
  const Eigen::Index n_state = cfg.state_box ? n * Np : 0;
  const Eigen::Index m = n_box + n_rate + n_state;

  qp.D = Eigen::MatrixXd::Zero(m, Nc);
  qp.d_lo.resize(m);
  qp.d_hi.resize(m);
  Eigen::Index row = 0;
  for (int k = 0; k < Nc; ++k, ++row) {
    qp.D(row, k) = 1.0;
    qp.d_lo(row) = cfg.u_min;
    qp.d_hi(row) = cfg.u_max;
  }
  if (rate_rows) {
    const double du = *cfg.du_max;
    if (first_rate_row) {
      qp.D(row, 0) = 1.0;
      qp.d_lo(row) = *previous_input - du;
      qp.d_hi(row) = *previous_input + du;
      ++row;
    }
    for (int k = 1; k < Nc; ++k, ++row) {
      qp.D(row, k) = 1.0;
      qp.D(row, k - 1) = -1.0;
      qp.d_lo(row) = -du;
      qp.d_hi(row) = du;
    }
  }
  if (cfg.state_box) {
    qp.D.bottomRows(n_state) = pred.B_qp;
    for (int k = 0; k < Np; ++k) {
      qp.d_lo.segment(row + k * n, n) = cfg.state_box->lower - free_response.segment(k * n, n);
      qp.d_hi.segment(row + k * n, n) = cfg.state_box->upper - free_response.segment(k * n, n);
    }
  }
  return qp;
}

namespace {

/// Inequality n_j' U >= b_j derived from one side of a two-sided row.
struct Inequality {
  Eigen::Index row;
  bool upper;
  double b;
};

class DualActiveSet {
 public:
  explicit DualActiveSet(const QPProblem& qp) : qp_(qp), llt_(qp.H) {
    if (llt_.info() != Eigen::Success) {
      throw std::invalid_argument("solve_qp: H is not positive definite");
    }
    for (Eigen::Index i = 0; i < qp.num_constraints(); ++i) {
      if (std::isfinite(qp.d_lo(i))) all_.push_back({i, false, qp.d_lo(i)});
      if (std::isfinite(qp.d_hi(i))) all_.push_back({i, true, -qp.d_hi(i)});
    }
    in_set_.assign(all_.size(), false);
  }

  QPSolution run(const std::optional<Eigen::VectorXd>& warm_start) {
    QPSolution sol;
    const Eigen::Index n = qp_.num_vars();
    for (Eigen::Index i = 0; i < qp_.num_constraints(); ++i) {
      if (qp_.d_lo(i) > qp_.d_hi(i)) {
        sol.status = QPStatus::Infeasible;
        sol.U = -llt_.solve(qp_.f);
        finish(sol);
        return sol;
      }
    }

    if (warm_start && warm_start->size() == n) {
      hot_start(*warm_start);
    } else {
      x_ = -llt_.solve(qp_.f);
    }

    const int max_iter = 10 * static_cast<int>(qp_.num_constraints() + n);
    int iter = 0;
    while (true) {
      // most violated inactive constraint, lowest index on ties
      int p = -1;
      double worst = 0.0;
      for (std::size_t j = 0; j < all_.size(); ++j) {
        if (in_set_[j]) continue;
        const double s = slack(static_cast<int>(j));
        const double tol = 1e-12 * (1.0 + std::abs(all_[j].b));
        if (s < -tol && s < worst) {
          worst = s;
          p = static_cast<int>(j);
        }
      }
      if (p < 0) {
        sol.status = QPStatus::Optimal;
        break;
      }

      double u_p = 0.0;
      bool added = false;
      while (!added) {
        if (++iter > max_iter) {
          sol.status = QPStatus::MaxIterations;
          sol.U = x_;
          sol.iterations = iter;
          finish(sol);
          return sol;
        }
        const Eigen::VectorXd np = normal(p);
        Eigen::VectorXd z;
        Eigen::VectorXd r;
        directions(np, z, r);

        // dual step limit
        double t1 = kInf;
        int k_drop = -1;
        for (Eigen::Index a = 0; a < r.size(); ++a) {
          if (r(a) > 1e-14) {
            const double ratio = u_(a) / r(a);
            if (ratio < t1) {
              t1 = ratio;
              k_drop = static_cast<int>(a);
            }
          }
        }
        // primal step length
        double t2 = kInf;
        const double zn = z.dot(np);
        if (z.norm() > 1e-13 * (1.0 + np.norm()) && zn > 0.0) {
          t2 = -slack(p) / zn;
        }
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) {
          sol.status = QPStatus::Infeasible;
          sol.U = x_;
          sol.iterations = iter;
          finish(sol);
          return sol;
        }

        if (std::isfinite(t2)) x_ += t * z;
        u_ -= t * r;
        u_p += t;
        if (t2 <= t1) {
          set_.push_back(p);
          in_set_[p] = true;
          u_.conservativeResize(u_.size() + 1);
          u_(u_.size() - 1) = u_p;
          added = true;
        } else {
          drop(k_drop);
        }
      }
    }
    sol.U = x_;
    sol.iterations = iter;
    finish(sol);
    return sol;
  }

 private:
  Eigen::VectorXd normal(int j) const {
    const Inequality& c = all_[j];
    Eigen::VectorXd n = qp_.D.row(c.row).transpose();
    return c.upper ? Eigen::VectorXd(-n) : n;
  }

  double slack(int j) const {
    const Inequality& c = all_[j];
    const double dn = qp_.D.row(c.row).dot(x_);
    return (c.upper ? -dn : dn) - c.b;
  }

  Eigen::MatrixXd active_normals() const {
    Eigen::MatrixXd N(qp_.num_vars(), static_cast<Eigen::Index>(set_.size()));
    for (std::size_t a = 0; a < set_.size(); ++a) N.col(a) = normal(set_[a]);
    return N;
  }

  // z: primal direction in the null space of the working set (H-metric),
  // r: change of the working-set multipliers per unit multiplier of np.
  void directions(const Eigen::VectorXd& np, Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    const Eigen::VectorXd hnp = llt_.solve(np);
    if (set_.empty()) {
      z = hnp;
      r.resize(0);
      return;
    }
    const Eigen::MatrixXd N = active_normals();
    const Eigen::MatrixXd HN = llt_.solve(N);
    const Eigen::MatrixXd S = N.transpose() * HN;
    r = S.ldlt().solve(N.transpose() * hnp);
    z = hnp - HN * r;
  }

  void drop(int a) {
    in_set_[set_[a]] = false;
    set_.erase(set_.begin() + a);
    const Eigen::Index k = u_.size();
    Eigen::VectorXd u(k - 1);
    u << u_.head(a), u_.tail(k - a - 1);
    u_ = u;
  }

  // Equality-constrained minimizer on the working set, multipliers in u_.
  void solve_working_set() {
    if (set_.empty()) {
      x_ = -llt_.solve(qp_.f);
      u_.resize(0);
      return;
    }
    const Eigen::MatrixXd N = active_normals();
    Eigen::VectorXd b(static_cast<Eigen::Index>(set_.size()));
    for (std::size_t a = 0; a < set_.size(); ++a) b(a) = all_[set_[a]].b;
    const Eigen::MatrixXd HN = llt_.solve(N);
    const Eigen::MatrixXd S = N.transpose() * HN;
    u_ = S.ldlt().solve(b + HN.transpose() * qp_.f);
    x_ = HN * u_ - llt_.solve(qp_.f);
  }

  void hot_start(const Eigen::VectorXd& guess) {
    x_ = guess;
    Eigen::MatrixXd N(qp_.num_vars(), 0);
    for (std::size_t j = 0; j < all_.size(); ++j) {
      const int jj = static_cast<int>(j);
      if (std::abs(slack(jj)) > 1e-9 * (1.0 + std::abs(all_[j].b))) continue;
      if (N.cols() >= qp_.num_vars()) break;
      Eigen::MatrixXd trial(N.rows(), N.cols() + 1);
      trial << N, normal(jj);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
      lu.setThreshold(1e-10);
      if (lu.rank() < trial.cols()) continue;
      N = trial;
      set_.push_back(jj);
      in_set_[j] = true;
    }
    solve_working_set();
    // keep only a dual-feasible working set
    while (u_.size() > 0) {
      Eigen::Index worst = 0;
      const double min_u = u_.minCoeff(&worst);
      if (min_u >= 0.0) break;
      drop(static_cast<int>(worst));
      solve_working_set();
    }
  }

  void finish(QPSolution& sol) const {
    const Eigen::Index m = qp_.num_constraints();
    sol.lambda.lower = Eigen::VectorXd::Zero(m);
    sol.lambda.upper = Eigen::VectorXd::Zero(m);
    for (std::size_t a = 0; a < set_.size() && static_cast<Eigen::Index>(a) < u_.size(); ++a) {
      const Inequality& c = all_[set_[a]];
      (c.upper ? sol.lambda.upper : sol.lambda.lower)(c.row) += u_(a);
    }
  }

  const QPProblem& qp_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::vector<Inequality> all_;
  std::vector<bool> in_set_;
  std::vector<int> set_;
  Eigen::VectorXd x_;
  Eigen::VectorXd u_;
};

}  // namespace

QPSolution solve_qp(const QPProblem& qp, const std::optional<Eigen::VectorXd>& warm_start) {
  if (qp.H.rows() != qp.H.cols() || qp.f.size() != qp.H.rows() ||
      (qp.D.rows() > 0 && qp.D.cols() != qp.H.rows()) || qp.d_lo.size() != qp.D.rows() ||
      qp.d_hi.size() != qp.D.rows()) {
    throw DimensionMismatchError("solve_qp: inconsistent problem dimensions");
  }
  DualActiveSet solver(qp);
  return solver.run(warm_start);
}

KKTResidual kkt_residual(const QPProblem& qp, const Eigen::VectorXd& U,
                         const Multipliers& lambda) {
  KKTResidual res;
  Eigen::VectorXd grad = qp.H * U + qp.f;
  if (qp.num_constraints() > 0) {
    grad += qp.D.transpose() * (lambda.upper - lambda.lower);
  }
  res.stationarity = grad.size() > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  for (Eigen::Index i = 0; i < qp.num_constraints(); ++i) {
    const double du = qp.D.row(i).dot(U);
    res.feasibility = std::max({res.feasibility, qp.d_lo(i) - du, du - qp.d_hi(i)});
    double comp = 0.0;
    if (lambda.lower(i) != 0.0) comp += std::abs(lambda.lower(i) * (du - qp.d_lo(i)));
    if (lambda.upper(i) != 0.0) comp += std::abs(lambda.upper(i) * (qp.d_hi(i) - du));
    // a negative multiplier is a sign violation of the dual
    comp = std::max({comp, -lambda.lower(i), -lambda.upper(i)});
    res.complementarity = std::max(res.complementarity, comp);
  }
  return res;
}

}  // namespace sphero
