#pragma once

// Shared generators and independent oracles for the unit tests.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "sphero/dynamics.hpp"
#include "sphero/qp.hpp"

namespace sphero::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
    return m;
  }

  /// Symmetric positive definite with smallest eigenvalue at least `floor`.
  Eigen::MatrixXd spd(Eigen::Index n, double floor = 0.1) {
    const Eigen::MatrixXd g = matrix(n, n, -1.0, 1.0);
    return g * g.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
  }

  /// Small-angle state with moderate rates.
  GeneralizedState small_state(double angle = 0.2, double rate = 0.5) {
    GeneralizedState s;
    s.q << uniform(-angle, angle), uniform(-1.0, 1.0), uniform(-angle, angle),
        uniform(-angle, angle);
    s.qdot << uniform(-rate, rate), uniform(-rate, rate), uniform(-rate, rate),
        uniform(-rate, rate);
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Gaussian elimination with partial pivoting, written without Eigen solvers.
inline Eigen::VectorXd gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    a.row(col).swap(a.row(pivot));
    std::swap(b(col), b(pivot));
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / a(col, col);
      a.row(r) -= factor * a.row(col);
      b(r) -= factor * b(col);
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double acc = b(r);
    for (Eigen::Index c = r + 1; c < n; ++c) acc -= a(r, c) * x(c);
    x(r) = acc / a(r, r);
  }
  return x;
}

/// Box QP by enumerating all 3^n assignments of (free, at lower, at upper).
/// Returns the feasible KKT point with the lowest objective.
inline Eigen::VectorXd enumerate_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                                        const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index n = H.rows();
  int combos = 1;
  for (Eigen::Index i = 0; i < n; ++i) combos *= 3;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_u = Eigen::VectorXd::Zero(n);
  for (int code = 0; code < combos; ++code) {
    std::vector<int> kind(n);
    int c = code;
    for (Eigen::Index i = 0; i < n; ++i) {
      kind[i] = c % 3;
      c /= 3;
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (kind[i] == 1) u(i) = lo(i);
      else if (kind[i] == 2) u(i) = hi(i);
      else free_idx.push_back(i);
    }
    if (!free_idx.empty()) {
      const auto m = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd hf(m, m);
      Eigen::VectorXd rhs(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        rhs(a) = -f(free_idx[a]);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (kind[i] != 0) rhs(a) -= H(free_idx[a], i) * u(i);
        }
        for (Eigen::Index b = 0; b < m; ++b) hf(a, b) = H(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd uf = gauss_solve(hf, rhs);
      for (Eigen::Index a = 0; a < m; ++a) u(free_idx[a]) = uf(a);
    }
    bool feasible = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (u(i) < lo(i) - 1e-12 || u(i) > hi(i) + 1e-12) feasible = false;
    }
    if (!feasible) continue;
    const double obj = 0.5 * u.dot(H * u) + u.dot(f);
    if (obj < best) {
      best = obj;
      best_u = u;
    }
  }
  return best_u;
}

inline QPProblem box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, double lo, double hi) {
  const Eigen::Index n = H.rows();
  QPProblem qp;
  qp.H = H;
  qp.f = f;
  qp.D = Eigen::MatrixXd::Identity(n, n);
  qp.d_lo = Eigen::VectorXd::Constant(n, lo);
  qp.d_hi = Eigen::VectorXd::Constant(n, hi);
  return qp;
}

}  // namespace sphero::testing
