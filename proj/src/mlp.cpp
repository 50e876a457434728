#include "sphero/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sphero/errors.hpp"

namespace sphero {

namespace {

// mt19937_64 output is fixed by the standard; the distributions are not, so
// uniform doubles are built from the raw bits.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct NormalizedSet {
  Eigen::MatrixXd x;  // samples x 2
  Eigen::VectorXd y;
};

NormalizedSet normalize(const MLPParams& p, std::span<const Sample> samples) {
  NormalizedSet set;
  set.x.resize(static_cast<Eigen::Index>(samples.size()), 2);
  set.y.resize(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    set.x(ii, 0) = p.input_norm[0].apply(samples[i].v);
    set.x(ii, 1) = p.input_norm[1].apply(samples[i].phi);
    set.y(ii) = p.output_norm.apply(samples[i].beta);
  }
  return set;
}

/// Residuals (prediction - target) in normalized output units and their Jacobian.
void residuals(const MLPParams& p, const NormalizedSet& set, Eigen::VectorXd& e,
               Eigen::MatrixXd* J) {
  const Eigen::Index m = set.x.rows();
  const int h = p.hidden;
  e.resize(m);
  if (J) J->resize(m, p.num_weights());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Vector2d xi = set.x.row(i).transpose();
    const Eigen::VectorXd act = (p.W1 * xi + p.b1).array().tanh().matrix();
    e(i) = p.W2.dot(act) + p.b2 - set.y(i);
    if (!J) continue;
    for (int j = 0; j < h; ++j) {
      const double dact = p.W2(j) * (1.0 - act(j) * act(j));
      (*J)(i, 2 * j) = dact * xi(0);
      (*J)(i, 2 * j + 1) = dact * xi(1);
      (*J)(i, 2 * h + j) = dact;
      (*J)(i, 3 * h + j) = act(j);
    }
    (*J)(i, 4 * h) = 1.0;
  }
}

double mse_normalized_to_original(const MLPParams& p, const Eigen::VectorXd& e) {
  if (e.size() == 0) return 0.0;
  const double scale = 1.0 / p.output_norm.gain;
  return e.squaredNorm() / static_cast<double>(e.size()) * scale * scale;
}

}  // namespace

AffineMap AffineMap::from_range(double lo, double hi) {
  AffineMap map;
  map.center = 0.5 * (lo + hi);
  const double span = hi - lo;
  map.gain = span > 0.0 ? 2.0 / span : 1.0;
  return map;
}

MLPParams MLPParams::zeros(int hidden) {
  if (hidden < 1) throw std::invalid_argument("MLPParams: hidden width must be >= 1");
  MLPParams p;
  p.hidden = hidden;
  p.W1 = Eigen::MatrixXd::Zero(hidden, 2);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.W2 = Eigen::RowVectorXd::Zero(hidden);
  p.b2 = 0.0;
  return p;
}

Eigen::VectorXd MLPParams::flatten() const {
  Eigen::VectorXd theta(num_weights());
  for (int j = 0; j < hidden; ++j) {
    theta(2 * j) = W1(j, 0);
    theta(2 * j + 1) = W1(j, 1);
    theta(2 * hidden + j) = b1(j);
    theta(3 * hidden + j) = W2(j);
  }
  theta(4 * hidden) = b2;
  return theta;
}

void MLPParams::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != num_weights()) throw DimensionMismatchError("MLPParams: weight count");
  for (int j = 0; j < hidden; ++j) {
    W1(j, 0) = theta(2 * j);
    W1(j, 1) = theta(2 * j + 1);
    b1(j) = theta(2 * hidden + j);
    W2(j) = theta(3 * hidden + j);
  }
  b2 = theta(4 * hidden);
}

double forward(const MLPParams& p, double v, double phi) {
  const Eigen::Vector2d x(p.input_norm[0].apply(v), p.input_norm[1].apply(phi));
  const Eigen::VectorXd act = (p.W1 * x + p.b1).array().tanh().matrix();
  return p.output_norm.invert(p.W2.dot(act) + p.b2);
}

std::vector<Sample> Dataset::subset(Split which) const {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (split[i] == which) out.push_back(samples[i]);
  }
  return out;
}

Dataset split_dataset(std::vector<Sample> samples, const std::array<double, 3>& fractions,
                      std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw BadFractionsError("split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw BadFractionsError("split fractions must sum to 1");

  const std::size_t n = samples.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainders[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (remainders[k] >= remainders[best]) best = k;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  // Fisher-Yates on indices
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  Dataset ds;
  ds.seed = seed;
  ds.samples.reserve(n);
  ds.split.reserve(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    ds.samples.push_back(samples[order[pos]]);
    ds.split.push_back(pos < counts[0]               ? Split::Train
                       : pos < counts[0] + counts[1] ? Split::Validation
                                                     : Split::Test);
  }
  return ds;
}

Eigen::VectorXd lm_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& e, double lambda) {
  Eigen::MatrixXd system = J.transpose() * J;
  system.diagonal().array() += lambda;
  const Eigen::VectorXd grad = J.transpose() * e;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw JacobianSingularError("damped normal equations are singular");
  }
  Eigen::VectorXd step = -ldlt.solve(grad);
  if (!step.allFinite()) throw JacobianSingularError("damped step is not finite");
  return step;
}

double mean_squared_error(const MLPParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) {
    const double err = forward(params, s.v, s.phi) - s.beta;
    acc += err * err;
  }
  return acc / static_cast<double>(samples.size());
}

TrainingResult lm_train(const Dataset& dataset, const LMOptions& opt) {
  const std::vector<Sample> train = dataset.subset(Split::Train);
  const std::vector<Sample> val = dataset.subset(Split::Validation);
  if (train.empty()) throw std::invalid_argument("lm_train: empty training split");

  MLPParams p = MLPParams::zeros(opt.hidden);
  p.seed = opt.seed;
  {
    double vlo = train[0].v, vhi = train[0].v, plo = train[0].phi, phi_hi = train[0].phi;
    double ylo = train[0].beta, yhi = train[0].beta;
    for (const auto& s : train) {
      vlo = std::min(vlo, s.v);
      vhi = std::max(vhi, s.v);
      plo = std::min(plo, s.phi);
      phi_hi = std::max(phi_hi, s.phi);
      ylo = std::min(ylo, s.beta);
      yhi = std::max(yhi, s.beta);
    }
    p.input_norm = {AffineMap::from_range(vlo, vhi), AffineMap::from_range(plo, phi_hi)};
    p.output_norm = AffineMap::from_range(ylo, yhi);
  }
  std::mt19937_64 rng(opt.seed);
  Eigen::VectorXd theta(p.num_weights());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = uniform01(rng) - 0.5;
  p.unflatten(theta);

  const NormalizedSet train_set = normalize(p, train);
  const NormalizedSet val_set = normalize(p, val);
  const bool use_val = !val.empty();

  TrainingResult result;
  Eigen::VectorXd e;
  Eigen::MatrixXd J;
  residuals(p, train_set, e, &J);
  double mse = e.squaredNorm();
  double lambda = opt.lambda0;

  auto validation_mse = [&](const MLPParams& params) {
    Eigen::VectorXd ev;
    residuals(params, val_set, ev, nullptr);
    return mse_normalized_to_original(params, ev);
  };

  MLPParams best = p;
  double best_score = use_val ? validation_mse(p) : mse_normalized_to_original(p, e);
  int fails = 0;
  result.history.stop_reason = "max_epochs";

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    const Eigen::VectorXd grad = J.transpose() * e;
    if (mse_normalized_to_original(p, e) <= opt.goal) {
      result.history.stop_reason = "goal";
      break;
    }
    if (grad.norm() < opt.min_grad) {
      result.history.stop_reason = "min_grad";
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::VectorXd step;
      try {
        step = lm_step(J, e, lambda);
      } catch (const JacobianSingularError&) {
        if (lambda >= opt.lambda_max) throw;
        lambda *= opt.lambda_increase;
        continue;
      }
      MLPParams trial = p;
      trial.unflatten(p.flatten() + step);
      Eigen::VectorXd e_trial;
      residuals(trial, train_set, e_trial, nullptr);
      const double mse_trial = e_trial.squaredNorm();
      if (mse_trial < mse) {
        p = trial;
        lambda *= opt.lambda_decrease;
        accepted = true;
      } else {
        lambda *= opt.lambda_increase;
        if (lambda > opt.lambda_max) break;
      }
    }
    if (!accepted) {
      result.history.stop_reason = "lambda_max";
      break;
    }

    residuals(p, train_set, e, &J);
    mse = e.squaredNorm();
    const double train_mse = mse_normalized_to_original(p, e);
    const double val_mse = use_val ? validation_mse(p) : train_mse;
    result.history.train_mse.push_back(train_mse);
    result.history.validation_mse.push_back(val_mse);

    if (val_mse < best_score) {
      best_score = val_mse;
      best = p;
      result.history.best_epoch = epoch;
      fails = 0;
    } else if (use_val && ++fails >= opt.max_fail) {
      result.history.stop_reason = "validation";
      break;
    }
  }
  result.params = best;
  return result;
}

double steady_state_beta(const RobotParams& robot, double v, double phi) {
  // m_p g l sin(beta) = F_fy r, the two transverse rows balancing at rest.
  const double mgl = robot.m_p * robot.g * robot.l;
  const double load = centripetal_friction(robot, v, phi) * robot.r;
  auto residual = [&](double beta) { return mgl * std::sin(beta) - load; };
  double lo = -0.5 * std::numbers::pi;
  double hi = 0.5 * std::numbers::pi;
  double r_lo = residual(lo);
  const double r_hi = residual(hi);
  if (r_lo == 0.0) return lo;
  if (r_hi == 0.0) return hi;
  if ((r_lo > 0.0) == (r_hi > 0.0)) {
    throw NoSteadyStateError("no steady lean for v = " + std::to_string(v) +
                             ", phi = " + std::to_string(phi));
  }
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double r_mid = residual(mid);
    if (r_mid == 0.0) return mid;
    if ((r_mid > 0.0) == (r_lo > 0.0)) {
      lo = mid;
      r_lo = r_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

BetaModel train_beta_model(const RobotParams& robot, std::span<const double> v_grid,
                           std::span<const double> phi_grid, const LMOptions& options,
                           const std::array<double, 3>& fractions) {
  std::vector<Sample> samples;
  samples.reserve(v_grid.size() * phi_grid.size());
  for (double v : v_grid) {
    for (double phi : phi_grid) {
      samples.push_back({v, phi, steady_state_beta(robot, v, phi)});
    }
  }
  BetaModel model;
  model.dataset = split_dataset(std::move(samples), fractions, options.seed);
  TrainingResult trained = lm_train(model.dataset, options);
  model.params = std::move(trained.params);
  model.history = std::move(trained.history);
  return model;
}

std::vector<double> default_v_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 9; ++i) grid.push_back(0.2 + 0.1 * i);
  return grid;
}

std::vector<double> default_phi_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(-0.27 + 0.06 * i);
  return grid;
}

std::string mlp_to_json(const MLPParams& p) {
  nlohmann::json j;
  j["layer_sizes"] = {2, p.hidden, 1};
  std::vector<double> w1;
  for (int r = 0; r < p.hidden; ++r) {
    w1.push_back(p.W1(r, 0));
    w1.push_back(p.W1(r, 1));
  }
  j["W1"] = w1;
  j["b1"] = std::vector<double>(p.b1.data(), p.b1.data() + p.b1.size());
  j["W2"] = std::vector<double>(p.W2.data(), p.W2.data() + p.W2.size());
  j["b2"] = p.b2;
  j["input_center"] = {p.input_norm[0].center, p.input_norm[1].center};
  j["input_gain"] = {p.input_norm[0].gain, p.input_norm[1].gain};
  j["output_center"] = p.output_norm.center;
  j["output_gain"] = p.output_norm.gain;
  j["seed"] = p.seed;
  return j.dump(2);
}

MLPParams mlp_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  if (sizes.size() != 3 || sizes[0] != 2 || sizes[2] != 1) {
    throw std::invalid_argument("mlp json: layer_sizes must be [2, h, 1]");
  }
  MLPParams p = MLPParams::zeros(sizes[1]);
  const auto w1 = j.at("W1").get<std::vector<double>>();
  const auto b1 = j.at("b1").get<std::vector<double>>();
  const auto w2 = j.at("W2").get<std::vector<double>>();
  const auto h = static_cast<std::size_t>(p.hidden);
  if (w1.size() != 2 * h || b1.size() != h || w2.size() != h) {
    throw std::invalid_argument("mlp json: weight array sizes disagree with layer_sizes");
  }
  for (int r = 0; r < p.hidden; ++r) {
    p.W1(r, 0) = w1[2 * r];
    p.W1(r, 1) = w1[2 * r + 1];
    p.b1(r) = b1[r];
    p.W2(r) = w2[r];
  }
  p.b2 = j.at("b2").get<double>();
  const auto ic = j.at("input_center").get<std::vector<double>>();
  const auto ig = j.at("input_gain").get<std::vector<double>>();
  p.input_norm = {AffineMap{ic.at(0), ig.at(0)}, AffineMap{ic.at(1), ig.at(1)}};
  p.output_norm = AffineMap{j.at("output_center").get<double>(), j.at("output_gain").get<double>()};
  if (p.input_norm[0].gain == 0.0 || p.input_norm[1].gain == 0.0 || p.output_norm.gain == 0.0) {
    throw std::invalid_argument("mlp json: normalization gains must be nonzero");
  }
  p.seed = j.value("seed", std::uint64_t{0});
  return p;
}

void save_mlp(const MLPParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << mlp_to_json(params) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

MLPParams load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return mlp_from_json(buffer.str());
}

}  // namespace sphero
