#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sogmix/ais_features.hpp"
#include "sogmix/common.hpp"

namespace sogmix {

// Ground-truth generator configuration. Mean functions come from a small
// named library ("flat", "coastal", "wind_linear"); covariate distributions
// are documented in the implementation and tested against their CDFs.
struct SynthConfig {
  std::int64_t n = 10000;
  int q_mmsi = 50;
  int q_cell = 30;
  int q_time = 60;
  double var_mmsi = 0.5;
  double var_cell = 0.3;
  double var_time = 0.2;
  double resid_var = 1.0;         // sqrt-SOG observation noise
  double prevalence = 0.5;        // target P(SOG > 0)
  std::string clf_mean = "coastal";
  std::string reg_mean = "coastal";
  double reg_mean_level = 2.6;    // intercept of the sqrt-SOG latent
  std::uint64_t seed = 1;
};

struct SynthTruth {
  Eigen::VectorXd clf_latent;         // f + u + s + t (+ calibrated intercept)
  Eigen::VectorXd reg_latent;         // sqrt-SOG scale, f + u + s + t
  Eigen::VectorXd bayes_prob;         // Phi(clf_latent)
  Eigen::VectorXd gaussian_response;  // reg_latent + noise, every row
  std::vector<Eigen::VectorXd> clf_effects;  // per factor (mmsi, cell, day)
  std::vector<Eigen::VectorXd> reg_effects;
};

struct SynthData {
  std::vector<AisRecord> records;  // canonical order
  std::vector<EnvSample> env;
  SynthTruth truth;
};

// Deterministic: identical (config, seed) reproduces identical bytes.
SynthData generate(const SynthConfig& config);

// AUC of the true latent against the realized labels: the ceiling any
// estimator of this data can approach.
double bayes_auc(const Eigen::VectorXd& latent, const std::vector<int>& labels);

}  // namespace sogmix
