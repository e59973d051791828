#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sogmix/ais_features.hpp"
#include "sogmix/common.hpp"
#include "sogmix/trees.hpp"

namespace sogmix {

enum class Likelihood { gaussian, bernoulli_probit };

// Per-row grouping indices for an arbitrary set of crossed factors.
// Training rows must carry valid levels; -1 (unseen) is allowed only at
// prediction time and contributes the prior mean 0.
struct GroupTable {
  std::vector<std::string> names;
  std::vector<std::vector<std::int32_t>> levels;  // [factor][row]
  std::vector<int> level_counts;

  Eigen::Index n_rows() const {
    return levels.empty() ? 0 : static_cast<Eigen::Index>(levels[0].size());
  }
  int n_factors() const { return static_cast<int>(names.size()); }
  GroupTable subset(const std::vector<int>& rows) const;

  static GroupTable from_keys(const GroupKeys& keys);
};

struct RandomEffectsSpec {
  std::vector<std::string> factor_names;
  std::vector<int> level_counts;
  std::vector<double> variances;  // sigma^2_k, >= 0
  double resid_var = 1.0;         // sigma^2_e (Gaussian likelihood)

  int n_factors() const { return static_cast<int>(factor_names.size()); }
  static RandomEffectsSpec for_groups(const GroupTable& groups);
};

// Posterior-mean (BLUP) coefficients solving
//   (ZᵀZ + sigma^2_e D^-1) b = Zᵀ (y - offset)
// over the stacked one-hot design of all factors with positive variance.
// Factors with sigma^2_k = 0 are dropped and return zero vectors.
std::vector<Eigen::VectorXd> solve_mixed_equations(const Eigen::VectorXd& offset,
                                                   const Eigen::VectorXd& y,
                                                   const GroupTable& groups,
                                                   const RandomEffectsSpec& spec);

// -log N(y | offset, sum_k sigma^2_k Z_k Z_kᵀ + sigma^2_e I), evaluated
// through the q x q inner system (Woodbury / determinant lemma); the n x n
// covariance is never formed.
double marginal_nll_gaussian(const Eigen::VectorXd& offset,
                             const Eigen::VectorXd& y, const GroupTable& groups,
                             const RandomEffectsSpec& spec);

struct VarianceEstimate {
  RandomEffectsSpec spec;
  double nll = 0;
  bool warning = false;  // no improving move from any start
};

struct VarianceOptimizerOptions {
  std::vector<double> start_multipliers = {0.01, 0.1, 1.0};  // x var(y)
  double rel_tol = 1e-6;
  int max_sweeps = 8;
  double line_tol_log = 0.02;  // golden-section width in log-variance
  std::optional<RandomEffectsSpec> warm_start;
};

// Derivative-free coordinate descent with golden-section line searches on
// the log-variances, maximizing the (Laplace-approximate, for probit)
// marginal likelihood.
VarianceEstimate estimate_variances(const Eigen::VectorXd& offset,
                                    const Eigen::VectorXd& y,
                                    const GroupTable& groups,
                                    Likelihood likelihood,
                                    const VarianceOptimizerOptions& opts = {});

struct TrainConfig {
  int n_rounds = 100;
  double learning_rate = 0.1;
  TreeParams tree;
  int variance_cadence = 10;  // re-estimate every k rounds (round 0 included)
  VarianceOptimizerOptions variance_opts;
  std::uint64_t seed = 0;
  // Pin the variance components instead of estimating them.
  std::optional<RandomEffectsSpec> fixed_spec;
};

struct MixedBoostModel {
  Likelihood likelihood = Likelihood::gaussian;
  Ensemble ensemble;
  RandomEffectsSpec spec;
  std::vector<Eigen::VectorXd> coefficients;  // per factor, length q_k
  std::uint64_t seed = 0;
};

MixedBoostModel train_gaussian(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GroupTable& groups, const TrainConfig& config);

MixedBoostModel train_probit(const Eigen::MatrixXd& X,
                             const std::vector<int>& labels,
                             const GroupTable& groups, const TrainConfig& config);

// latent = ensemble(X) + sum_k coefficients[k][level]; absent/unseen levels
// contribute 0. Pass nullptr to predict from the ensemble alone.
Eigen::VectorXd predict_latent(const MixedBoostModel& model,
                               const Eigen::MatrixXd& X,
                               const GroupTable* groups);

// Probability Phi(latent) for the probit likelihood, identity for Gaussian.
Eigen::VectorXd predict_response(const MixedBoostModel& model,
                                 const Eigen::MatrixXd& X,
                                 const GroupTable* groups);

// Laplace mode of the random-effect coefficients under the probit
// likelihood, exposed for the variance optimizer and tests.
struct LaplaceMode {
  Eigen::VectorXd b;       // stacked coefficients (active factors)
  Eigen::VectorXd score;   // d loglik / d eta at the mode
  Eigen::VectorXd weight;  // negative second derivative (working weights)
  double penalized_ll = 0;
  double marginal_nll = 0;
  int iterations = 0;
  double grad_norm = 0;
};

LaplaceMode laplace_mode_probit(const Eigen::VectorXd& F,
                                const std::vector<int>& labels,
                                const GroupTable& groups,
                                const RandomEffectsSpec& spec,
                                const Eigen::VectorXd* warm_start = nullptr);

}  // namespace sogmix
