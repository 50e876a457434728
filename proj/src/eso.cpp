#include "sphero/eso.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

constexpr double kObservableSigma = 1e-8;
constexpr std::uint64_t kCandidateSeed = 20240601;
constexpr int kCandidates = 16;

Eigen::MatrixXd observability_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
  const Eigen::Index N = A.rows();
  const Eigen::Index p = C.rows();
  Eigen::MatrixXd O(p * N, N);
  Eigen::MatrixXd block = C;
  for (Eigen::Index k = 0; k < N; ++k) {
    O.middleRows(k * p, p) = block;
    block = block * A;
  }
  return O;
}

Eigen::MatrixXd shifted_generator(const AugmentedModel& aug, double T_s) {
  const Eigen::Index N = aug.A_a.rows();
  return (aug.A_a - Eigen::MatrixXd::Identity(N, N)) / T_s;
}

}  // namespace

ObservabilityReport observability(const AugmentedModel& aug, double T_s) {
  const Eigen::MatrixXd O = observability_matrix(shifted_generator(aug, T_s), aug.C_a);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(O);
  const Eigen::VectorXd sv = svd.singularValues();
  ObservabilityReport report;
  report.sigma_min = sv.size() == aug.A_a.rows() ? sv(sv.size() - 1) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > kObservableSigma) ++report.rank;
  }
  return report;
}

AugmentedModel augment(const LinearModel& model, std::span<const int> disturbance_channels,
                       std::span<const int> outputs) {
  const Eigen::Index n = model.size();
  const auto n_d = static_cast<Eigen::Index>(disturbance_channels.size());
  const Eigen::Index N = n + n_d;

  AugmentedModel aug;
  aug.n = n;
  aug.n_d = n_d;
  aug.channels.assign(disturbance_channels.begin(), disturbance_channels.end());
  aug.outputs.assign(outputs.begin(), outputs.end());
  aug.A_a = Eigen::MatrixXd::Identity(N, N);
  aug.A_a.topLeftCorner(n, n) = model.A_d;
  for (Eigen::Index k = 0; k < n_d; ++k) {
    const int row = disturbance_channels[k];
    if (row < 0 || row >= n) throw std::invalid_argument("augment: channel out of range");
    aug.A_a(row, n + k) = model.T_s;
  }
  aug.B_a = Eigen::VectorXd::Zero(N);
  aug.B_a.head(n) = model.B_d;
  aug.offset = Eigen::VectorXd::Zero(N);
  aug.offset.head(n) = model.C_d;
  aug.C_a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(outputs.size()), N);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i] < 0 || outputs[i] >= n) throw std::invalid_argument("augment: bad output");
    aug.C_a(static_cast<Eigen::Index>(i), outputs[i]) = 1.0;
  }

  if (n_d > 0) {
    const ObservabilityReport rep = observability(aug, model.T_s);
    if (rep.rank < N) {
      throw UnobservableAugmentationError("augmented model has observability rank " +
                                          std::to_string(rep.rank) + " < " + std::to_string(N));
    }
  }
  return aug;
}

Eigen::MatrixXd design_gains(const AugmentedModel& aug, std::span<const double> poles,
                             double T_s) {
  const Eigen::Index N = aug.A_a.rows();
  const Eigen::Index p = aug.C_a.rows();
  if (static_cast<Eigen::Index>(poles.size()) != N) {
    throw std::invalid_argument("design_gains: need one pole per augmented state");
  }
  for (double pole : poles) {
    if (!(std::abs(pole) < 1.0)) throw std::invalid_argument("design_gains: |pole| must be < 1");
  }
  if (!(T_s > 0.0)) throw std::invalid_argument("design_gains: T_s must be positive");
  if (p == 0) throw PlacementFailedError("design_gains: no measured outputs");

  // Place the shifted, rescaled generator F = (A_a - I)/T_s at (pole - 1)/T_s;
  // then A_a - (T_s l) C_a = I + T_s (F - l C_a) has the requested spectrum.
  const Eigen::MatrixXd F = shifted_generator(aug, T_s);
  std::vector<double> mu;
  for (double pole : poles) mu.push_back((pole - 1.0) / T_s);
  std::stable_sort(mu.begin(), mu.end());

  // Target matrix: diagonal mu, with equal values grouped into at most p
  // Jordan chains so that repeated poles stay reachable with p outputs.
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) target(i, i) = mu[i];
  for (Eigen::Index i = 0; i < N;) {
    Eigen::Index j = i;
    while (j < N && mu[j] == mu[i]) ++j;
    const Eigen::Index m = j - i;
    const Eigen::Index chains = std::min(m, p);
    Eigen::Index pos = i;
    for (Eigen::Index c = 0; c < chains; ++c) {
      const Eigen::Index len = m / chains + (c < m % chains ? 1 : 0);
      for (Eigen::Index k = 1; k < len; ++k) {
        target(pos + k, pos + k - 1) = std::max(1.0, std::abs(mu[i]));
      }
      pos += len;
    }
    i = j;
  }

  // Dual Sylvester design: F' X - X T = C_a' G, K = G X^{-1}, l = K'.
  // Several deterministic G are tried and the best-conditioned X is kept.
  const Eigen::MatrixXd I_N = Eigen::MatrixXd::Identity(N, N);
  Eigen::MatrixXd kron(N * N, N * N);
  for (Eigen::Index a = 0; a < N; ++a) {
    for (Eigen::Index b = 0; b < N; ++b) {
      kron.block(a * N, b * N, N, N) = -target(b, a) * I_N;
      if (a == b) kron.block(a * N, b * N, N, N) += F.transpose();
    }
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> kron_lu(kron);
  if (!kron_lu.isInvertible()) {
    throw PlacementFailedError("design_gains: requested poles coincide with open-loop modes");
  }

  std::mt19937_64 rng(kCandidateSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best_cond = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_l;
  for (int trial = 0; trial < kCandidates; ++trial) {
    Eigen::MatrixXd G(p, N);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < N; ++j) G(i, j) = normal(rng);
    const Eigen::MatrixXd rhs = aug.C_a.transpose() * G;
    const Eigen::VectorXd x = kron_lu.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), N * N));
    const Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), N, N);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
    const Eigen::VectorXd sv = svd.singularValues();
    if (!(sv(N - 1) > 0.0)) continue;
    const double cond = sv(0) / sv(N - 1);
    if (cond < best_cond) {
      best_cond = cond;
      best_l = (G * X.inverse()).transpose();
    }
  }
  if (!std::isfinite(best_cond) || best_cond > 1e12) {
    throw PlacementFailedError("design_gains: pair is not observable enough for placement");
  }
  return T_s * best_l;
}

ObserverState make_observer(const AugmentedModel& aug, std::span<const double> poles,
                            double T_s) {
  ObserverState obs;
  obs.x_hat = Eigen::VectorXd::Zero(aug.n);
  obs.d_hat = Eigen::VectorXd::Zero(aug.n_d);
  obs.L = design_gains(aug, poles, T_s);
  return obs;
}

ObserverState eso_update(const ObserverState& obs, const AugmentedModel& aug, double u,
                         const Eigen::VectorXd& y) {
  if (obs.x_hat.size() != aug.n || obs.d_hat.size() != aug.n_d || y.size() != aug.C_a.rows()) {
    throw DimensionMismatchError("eso_update: dimensions disagree");
  }
  Eigen::VectorXd z(aug.n + aug.n_d);
  z << obs.x_hat, obs.d_hat;
  const Eigen::VectorXd innovation = y - aug.C_a * z;
  const Eigen::VectorXd next = aug.A_a * z + aug.B_a * u + aug.offset + obs.L * innovation;
  ObserverState out = obs;
  out.x_hat = next.head(aug.n);
  out.d_hat = next.tail(aug.n_d);
  return out;
}

LinearModel apply_disturbance(const LinearModel& model, std::span<const int> channels,
                              const Eigen::VectorXd& d_hat) {
  if (static_cast<Eigen::Index>(channels.size()) != d_hat.size()) {
    throw DimensionMismatchError("apply_disturbance: one estimate per channel required");
  }
  LinearModel out = model;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.C(channels[k]) += d_hat(kk);
    out.C_d(channels[k]) += d_hat(kk) * model.T_s;
  }
  return out;
}

}  // namespace sphero
