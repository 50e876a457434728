#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "sphero/linmodel.hpp"

namespace sphero {

/// Discrete model augmented with constant disturbances d, each entering one
/// acceleration row of the base model additively (in that row's units / s).
struct AugmentedModel {
  Eigen::MatrixXd A_a;     // (n + n_d) x (n + n_d)
  Eigen::VectorXd B_a;     // n + n_d
  Eigen::VectorXd offset;  // C_d of the base model, zero on disturbance rows
  Eigen::MatrixXd C_a;     // p x (n + n_d), selects the measured states
  Eigen::Index n = 0;
  Eigen::Index n_d = 0;
  std::vector<int> channels;  // base-model rows driven by each disturbance
  std::vector<int> outputs;   // base-model states that are measured
};

struct ObserverState {
  Eigen::VectorXd x_hat;
  Eigen::VectorXd d_hat;
  Eigen::MatrixXd L;
};

struct ObservabilityReport {
  Eigen::Index rank = 0;
  double sigma_min = 0.0;
};

/// Rank of the observability matrix of (A_a, C_a). The Krylov sequence is
/// generated by (A_a - I) / T_s, which spans the same subspace as A_a but is
/// far better conditioned when A_a is close to the identity.
ObservabilityReport observability(const AugmentedModel& aug, double T_s);

/// Throws UnobservableAugmentationError if the augmented pair is not observable.
AugmentedModel augment(const LinearModel& model, std::span<const int> disturbance_channels,
                       std::span<const int> outputs);

/// Observer gain L with eig(A_a - L C_a) equal to `poles` (real, |pole| < 1).
/// Solved as a Sylvester equation on the dual pair, so multi-output models
/// with repeated disturbance modes can be placed; repeated poles become
/// Jordan chains spread over the outputs.
Eigen::MatrixXd design_gains(const AugmentedModel& aug, std::span<const double> poles,
                             double T_s);

ObserverState make_observer(const AugmentedModel& aug, std::span<const double> poles,
                            double T_s);

/// Predictor form: z+ = A_a z + B_a u + offset + L (y - C_a z).
ObserverState eso_update(const ObserverState& obs, const AugmentedModel& aug, double u,
                         const Eigen::VectorXd& y);

/// Shifts C (and C_d by T_s times) on the disturbance channels; A_d, B_d unchanged.
LinearModel apply_disturbance(const LinearModel& model, std::span<const int> channels,
                              const Eigen::VectorXd& d_hat);

}  // namespace sphero
