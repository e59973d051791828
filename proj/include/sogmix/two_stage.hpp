#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sogmix/ais_features.hpp"
#include "sogmix/common.hpp"
#include "sogmix/mixed_boost.hpp"

namespace sogmix {

// 1 iff sog > 0 exactly; negative sog is rejected.
int derive_binary_label(double sog);

double sqrt_transform(double sog);   // requires sog > 0
double back_transform(double y);     // plain squaring, no bias correction

// Stratified K-fold plan with per-fold balanced training sets: within each
// training portion the majority class is subsampled without replacement to
// the minority count. Validation folds keep the original class mix.
struct FoldPlan {
  int K = 5;
  std::vector<int> fold_of_row;
  std::vector<std::vector<int>> balanced_train;  // per fold, sorted
  std::vector<std::vector<int>> validation;      // per fold, sorted
  std::uint64_t seed = 0;
};

FoldPlan make_fold_plan(const std::vector<int>& labels, int K, std::uint64_t seed);

struct TwoStageConfig {
  TrainConfig classifier;
  TrainConfig regressor;
  bool smearing = false;  // optional back-transform bias correction, off by default
};

struct TwoStageModel {
  MixedBoostModel classifier;  // probit, SOG>0
  MixedBoostModel regressor;   // Gaussian, sqrt-SOG on positive rows
  bool smearing = false;
  double smear_sq_resid = 0;  // mean squared training residual (sqrt scale)
};

// Out-of-fold predictions aligned with input rows; NaN where a stage does
// not apply (regressor on zero-SOG rows).
struct OofTable {
  std::vector<int> fold_of_row;
  Eigen::VectorXd classifier_latent;
  Eigen::VectorXd regressor_latent;  // sqrt-SOG scale
};

struct TwoStageResult {
  TwoStageModel model;
  OofTable oof;
};

// Per fold: probit classifier on the balanced training set, Gaussian
// regressor on the positive-SOG training rows; OOF predictions on untouched
// validation rows only. Random effects are refitted inside each fold. The
// returned model is trained the same way on the full data.
TwoStageResult train_two_stage(const Eigen::MatrixXd& X, const GroupTable& groups,
                               const Eigen::VectorXd& sog, const FoldPlan& plan,
                               const TwoStageConfig& config);

// Single-stage CV runs, used by the train-classifier / train-regressor
// commands and by train_two_stage itself.
struct ClassifierCvResult {
  MixedBoostModel model;
  Eigen::VectorXd oof_latent;
};
ClassifierCvResult classifier_cv(const Eigen::MatrixXd& X, const GroupTable& groups,
                                 const std::vector<int>& labels,
                                 const FoldPlan& plan, const TrainConfig& config);

struct RegressorCvResult {
  MixedBoostModel model;
  Eigen::VectorXd oof_latent;  // NaN on rows outside the regression subset
  double smear_sq_resid = 0;
  std::vector<double> fold_r2;  // per-fold OOF R^2 on the sqrt scale
};
// `subset` marks the rows the regression stage applies to (positive SOG).
RegressorCvResult regressor_cv(const Eigen::MatrixXd& X, const GroupTable& groups,
                               const Eigen::VectorXd& y_sqrt,
                               const std::vector<char>& subset,
                               const FoldPlan& plan, const TrainConfig& config);

struct TwoStagePrediction {
  double p_positive = 0;
  double conditional_sog = 0;
  double expected_sog = 0;  // plug-in composition p * conditional
};

TwoStagePrediction predict_expected_sog(const TwoStageModel& model,
                                        const Eigen::MatrixXd& X,
                                        const GroupTable* groups,
                                        Eigen::Index row);

// Monotone-nonincreasing piecewise-linear safe-speed curve over ice
// concentration in tenths (0-10); +inf marks "no limit".
class SafeSpeedCurve {
 public:
  SafeSpeedCurve(std::vector<double> icec_tenths, std::vector<double> max_knots);
  static SafeSpeedCurve from_csv(const std::string& path);

  double max_knots_at(double icec_fraction) const;

 private:
  std::vector<double> tenths_;
  std::vector<double> knots_;
};

// 1 iff sog strictly exceeds the interpolated safe speed at icec.
int ice_risk_indicator(double sog, double icec, const SafeSpeedCurve& curve);

struct RiskCell {
  CellId cell;
  std::int64_t n = 0;
  std::int64_t risky = 0;
  double proportion = 0;
};

struct RiskGrid {
  double resolution = 0.5;
  std::vector<RiskCell> cells;  // sorted by cell id

  // The N cells with the most observations (Fig.-2-style density markers).
  std::vector<RiskCell> top_density(int n) const;
};

RiskGrid aggregate_risk_grid(const std::vector<AisRecord>& records,
                             const std::vector<int>& risk_flags,
                             double resolution);

}  // namespace sogmix
