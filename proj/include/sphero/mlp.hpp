#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphero/dynamics.hpp"

namespace sphero {

/// Affine normalization z = gain * (x - center).
struct AffineMap {
  double center = 0.0;
  double gain = 1.0;

  double apply(double x) const { return gain * (x - center); }
  double invert(double z) const { return center + z / gain; }

  /// Maps [lo, hi] onto [-1, 1]; a degenerate range keeps unit gain.
  static AffineMap from_range(double lo, double hi);
};

/// Two-input, one-output perceptron with a tanh hidden layer and linear output.
struct MLPParams {
  int hidden = 10;
  Eigen::MatrixXd W1;     // hidden x 2
  Eigen::VectorXd b1;     // hidden
  Eigen::RowVectorXd W2;  // 1 x hidden
  double b2 = 0.0;
  std::array<AffineMap, 2> input_norm{};
  AffineMap output_norm{};
  std::uint64_t seed = 0;

  static MLPParams zeros(int hidden);

  Eigen::Index num_weights() const { return 4 * hidden + 1; }
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);
};

double forward(const MLPParams& params, double v, double phi);

struct Sample {
  double v = 0.0;
  double phi = 0.0;
  double beta = 0.0;
};

enum class Split { Train, Validation, Test };

struct Dataset {
  std::vector<Sample> samples;
  std::vector<Split> split;
  std::uint64_t seed = 0;

  std::vector<Sample> subset(Split which) const;
};

/// Random permutation by seed, then contiguous blocks sized by largest-remainder
/// rounding of the fractions (ties go to the later block).
Dataset split_dataset(std::vector<Sample> samples, const std::array<double, 3>& fractions,
                      std::uint64_t seed);

struct LMOptions {
  int hidden = 10;
  int max_epochs = 1000;
  double lambda0 = 1e-3;
  double lambda_decrease = 0.1;
  double lambda_increase = 10.0;
  double lambda_max = 1e10;
  int max_fail = 6;
  double goal = 0.0;
  double min_grad = 1e-12;
  std::uint64_t seed = 1;
};

struct TrainingHistory {
  std::vector<double> train_mse;
  std::vector<double> validation_mse;
  int best_epoch = 0;
  std::string stop_reason;
};

struct TrainingResult {
  MLPParams params;
  TrainingHistory history;
};

/// Damped Gauss-Newton step -(J'J + lambda I)^{-1} J'e.
/// Throws JacobianSingularError when the damped system cannot be factored.
Eigen::VectorXd lm_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& e, double lambda);

/// Levenberg-Marquardt training with validation early stopping; returns the
/// parameters of the best validation epoch (training MSE when no validation split).
TrainingResult lm_train(const Dataset& dataset, const LMOptions& options);

double mean_squared_error(const MLPParams& params, std::span<const Sample> samples);

/// Steady lean of the pendulum for cruise speed v and roll phi: zero rates and
/// accelerations in the transverse sub-model with centripetal friction.
/// Solved by bisection; throws NoSteadyStateError if no root is bracketed.
double steady_state_beta(const RobotParams& params, double v, double phi);

struct BetaModel {
  MLPParams params;
  Dataset dataset;
  TrainingHistory history;
};

BetaModel train_beta_model(const RobotParams& robot, std::span<const double> v_grid,
                           std::span<const double> phi_grid, const LMOptions& options,
                           const std::array<double, 3>& fractions = {0.70, 0.15, 0.15});

/// Default 9 x 10 grid used for the reference generator.
std::vector<double> default_v_grid();
std::vector<double> default_phi_grid();

void save_mlp(const MLPParams& params, const std::filesystem::path& path);
MLPParams load_mlp(const std::filesystem::path& path);
std::string mlp_to_json(const MLPParams& params);
MLPParams mlp_from_json(const std::string& text);

}  // namespace sphero
