#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "sogmix/common.hpp"

namespace sogmix {

// Array-of-nodes regression tree. Internal nodes route "value <= threshold"
// to the left child; leaves carry the weighted mean target and the total
// training weight (cover) that reached them. Covers are kept on internal
// nodes too; children covers sum exactly to the parent's.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;
  double cover = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;
};

struct TreeParams {
  int max_depth = 6;
  double min_samples_leaf = 50;  // minimum total weight per leaf
  int max_bins = 256;
  double feature_subsample = 1.0;
  std::uint64_t seed = 0;
};

// Additive ensemble: prediction = base_score + learning_rate * sum of trees.
struct Ensemble {
  double base_score = 0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  double predict_row(std::span<const double> x) const;
};

// Quantile-binned view of a feature matrix; built once per training run and
// shared across the trees of an ensemble. When a feature has at most
// max_bins distinct values every distinct value gets its own bin, which
// makes histogram splits identical to exact enumeration.
struct BinnedDesign {
  // cuts[f][b] is the inclusive upper boundary of bin b ("x <= cut" goes
  // left); bin count per feature is cuts[f].size() + 1.
  std::vector<std::vector<double>> cuts;
  std::vector<std::vector<std::uint16_t>> bins;  // [feature][row]
  Eigen::Index n_rows = 0;

  static BinnedDesign build(const Eigen::MatrixXd& X, int max_bins);
};

// Greedy weighted-variance-reduction fit. Categorical columns split as
// ordinals. Ties in gain resolve to the lowest feature index, then the
// lowest threshold.
RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets,
                        const Eigen::VectorXd& weights, const TreeParams& params);

// Same learner on a prebuilt design; `round_index` decorrelates the
// per-tree feature subsample across boosting rounds.
RegressionTree fit_tree_binned(const BinnedDesign& design,
                               const Eigen::VectorXd& targets,
                               const Eigen::VectorXd& weights,
                               const TreeParams& params,
                               std::uint64_t round_index = 0);

double predict_tree(const RegressionTree& tree, std::span<const double> x);
Eigen::VectorXd predict_tree(const RegressionTree& tree, const Eigen::MatrixXd& X);
Eigen::VectorXd predict_ensemble(const Ensemble& ens, const Eigen::MatrixXd& X);

}  // namespace sogmix
