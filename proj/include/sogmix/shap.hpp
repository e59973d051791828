#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "sogmix/common.hpp"
#include "sogmix/mixed_boost.hpp"
#include "sogmix/trees.hpp"

namespace sogmix {

// Per-row additive attributions on the ensemble's latent scale. Random
// effects are not attributed to features: the matrix decomposes f(x) only,
// which the scale tag records.
struct ShapMatrix {
  double base_value = 0;
  Eigen::MatrixXd phi;  // n x p
  std::string scale_tag;
};

struct TreeShap {
  double base = 0;       // cover-weighted expectation of the tree
  Eigen::VectorXd phi;   // exact Shapley attribution per feature
};

// Exact Shapley values for one tree under the path-cover (tree-conditional)
// value function: splits on out-of-coalition features descend both children
// weighted by cover. Coalitions are enumerated over the features the tree
// actually uses (absent features are null players).
TreeShap shap_tree(const RegressionTree& tree, std::span<const double> x,
                   int n_features);

// Attributions for the tree ensemble of a fitted model, summed over trees
// and scaled by the learning rate.
ShapMatrix shap_ensemble(const MixedBoostModel& model, const Eigen::MatrixXd& X,
                         int n_threads = 0);
ShapMatrix shap_ensemble(const Ensemble& ensemble, const Eigen::MatrixXd& X,
                         const std::string& scale_tag, int n_threads = 0);

struct FeatureImportance {
  int feature = 0;
  double mean_abs_shap = 0;
};

// Mean |phi| per feature, descending; ties break on the feature index.
std::vector<FeatureImportance> global_importance(const ShapMatrix& shap);

struct ShapBin {
  double lo = 0;
  double hi = 0;
  double center = 0;  // mean covariate value inside the bin
  double mean_shap = 0;
  std::int64_t count = 0;
};

struct BinnedShapSummary {
  int feature = 0;
  std::vector<ShapBin> bins;  // ordered, empty bins dropped
};

enum class ShapBinKind { equal_width, quantile };

BinnedShapSummary binned_marginal(const ShapMatrix& shap, int feature,
                                  std::span<const double> covariate,
                                  ShapBinKind kind, int n_bins);

struct CategoryShap {
  std::string level;
  double mean_shap = 0;
  std::int64_t count = 0;
};

// Per-level mean attribution of a categorical feature, sorted by mean.
std::vector<CategoryShap> categorical_summary(const ShapMatrix& shap, int feature,
                                              std::span<const std::string> labels);

}  // namespace sogmix
