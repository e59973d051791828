#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sogmix/common.hpp"

namespace sogmix {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

// Ratios with zero denominators stay unset rather than collapsing to 0.
struct ClassificationReport {
  std::optional<double> accuracy;
  std::optional<double> balanced_accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> npv;
  std::optional<double> kappa;
  std::optional<double> prevalence;
  std::optional<double> detection_rate;
  std::optional<double> detection_prevalence;
  std::optional<double> auc;
  std::optional<double> pr_auc;
};

struct RegressionReport {
  std::optional<double> r2_transformed;
  double mae_transformed = 0;
  double rmse_transformed = 0;
  std::optional<double> r2_original;
  double mae_original = 0;
  double rmse_original = 0;
};

struct CalibrationBin {
  double mean_predicted = 0;
  double mean_observed = 0;
  std::int64_t count = 0;
};

struct CalibrationTable {
  std::vector<CalibrationBin> bins;  // ordered by predicted mean
};

struct CurvePoint {
  double x = 0;  // fpr (ROC) or recall (PR)
  double y = 0;  // tpr (ROC) or precision (PR)
  double threshold = 0;
};

// Mann-Whitney AUC: P(score+ > score-) + P(tie)/2, via average ranks.
// Requires both classes.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Area under the precision-recall step curve (right-continuous in recall;
// no linear interpolation). Requires at least one positive.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

// Curve traces at every distinct score threshold, for the CSV outputs.
std::vector<CurvePoint> roc_curve(std::span<const double> scores,
                                  std::span<const int> labels);
std::vector<CurvePoint> pr_curve(std::span<const double> scores,
                                 std::span<const int> labels);

ConfusionCounts confusion_counts(std::span<const double> probabilities,
                                 std::span<const int> labels,
                                 double threshold = 0.5);

ClassificationReport confusion_metrics(const ConfusionCounts& counts);

// Sort by prediction, slice into n_bins near-equal groups (counts differ by
// at most one), report group means.
CalibrationTable calibration_bins(std::span<const double> predicted,
                                  std::span<const double> observed, int n_bins);

// Metrics on the model (sqrt) scale plus the original scale after squaring
// both series.
RegressionReport regression_metrics(std::span<const double> pred_sqrt,
                                    std::span<const double> obs_sqrt);

struct StratumBin {
  std::string stratum;
  double bin_center = 0;
  double mean_observed = 0;
  double mean_predicted = 0;
  std::int64_t count = 0;
};

struct BinSpec {
  enum class Kind { equal_width, quantile } kind = Kind::equal_width;
  int n_bins = 20;
};

std::vector<StratumBin> stratified_diagnostic(std::span<const double> observed,
                                              std::span<const double> predicted,
                                              std::span<const double> covariate,
                                              std::span<const std::string> strata,
                                              const BinSpec& spec);

struct GroupResidual {
  std::string group;
  double mean_residual = 0;  // observed - predicted
  std::int64_t count = 0;
};

std::vector<GroupResidual> residual_by_group(std::span<const double> observed,
                                             std::span<const double> predicted,
                                             std::span<const std::string> groups);

}  // namespace sogmix
