#include "sogmix/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sogmix/rng.hpp"

namespace sogmix {

namespace {

int route(const std::vector<TreeNode>& nodes, std::span<const double> x) {
  int idx = 0;
  while (!nodes[idx].is_leaf()) {
    const TreeNode& nd = nodes[idx];
    idx = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return idx;
}

struct BinStats {
  double w = 0;
  double wt = 0;
};

struct SplitChoice {
  bool found = false;
  int feature = -1;
  int cut = -1;
  double gain = 0;
};

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
  return nodes[route(nodes, x)].value;
}

int RegressionTree::leaf_index(std::span<const double> x) const {
  return route(nodes, x);
}

double Ensemble::predict_row(std::span<const double> x) const {
  double acc = 0;
  for (const auto& t : trees) acc += t.predict(x);
  return base_score + learning_rate * acc;
}

BinnedDesign BinnedDesign::build(const Eigen::MatrixXd& X, int max_bins) {
  if (max_bins < 2 || max_bins > 65535)
    throw ConfigError("BinnedDesign: max_bins out of range");
  if (X.rows() == 0) throw DataError("BinnedDesign: empty matrix");
  const Eigen::Index n = X.rows();
  const int p = static_cast<int>(X.cols());
  BinnedDesign d;
  d.n_rows = n;
  d.cuts.resize(p);
  d.bins.assign(p, std::vector<std::uint16_t>(static_cast<std::size_t>(n)));
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (int f = 0; f < p; ++f) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = X(i, f);
      if (!std::isfinite(v)) {
        const std::string name = f < kNumFeatures ? kFeatureNames[f]
                                                  : std::to_string(f);
        throw DataError("BinnedDesign: non-finite value in feature " + name);
      }
      sorted[static_cast<std::size_t>(i)] = v;
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    distinct.reserve(std::min<std::size_t>(sorted.size(), max_bins + 1));
    for (double v : sorted)
      if (distinct.empty() || v != distinct.back()) distinct.push_back(v);

    std::vector<double>& cuts = d.cuts[f];
    if (static_cast<int>(distinct.size()) <= max_bins) {
      // One bin per distinct value; the cut after bin b is the value itself.
      cuts.assign(distinct.begin(), distinct.end() - 1);
    } else {
      for (int t = 1; t < max_bins; ++t) {
        const auto pos = static_cast<std::size_t>(
            static_cast<double>(t) * static_cast<double>(n) / max_bins);
        const double v = sorted[std::min(pos, sorted.size() - 1)];
        if (cuts.empty() || v != cuts.back()) cuts.push_back(v);
      }
      if (!cuts.empty() && cuts.back() >= sorted.back()) cuts.pop_back();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = X(i, f);
      const auto it = std::lower_bound(cuts.begin(), cuts.end(), v);
      d.bins[f][static_cast<std::size_t>(i)] =
          static_cast<std::uint16_t>(it - cuts.begin());
    }
  }
  return d;
}

RegressionTree fit_tree_binned(const BinnedDesign& design,
                               const Eigen::VectorXd& targets,
                               const Eigen::VectorXd& weights,
                               const TreeParams& params,
                               std::uint64_t round_index) {
  const Eigen::Index n = design.n_rows;
  if (n == 0 || targets.size() != n || weights.size() != n)
    throw DataError("fit_tree: misaligned inputs");
  if (params.max_depth < 1 || params.min_samples_leaf < 1)
    throw ConfigError("fit_tree: bad tree params");
  if ((weights.array() < 0).any())
    throw DataError("fit_tree: negative weight");
  if (weights.sum() <= 0) throw DataError("fit_tree: total weight is zero");

  const int p = static_cast<int>(design.cuts.size());
  std::vector<int> features(p);
  std::iota(features.begin(), features.end(), 0);
  if (params.feature_subsample < 1.0) {
    const int keep = std::max(
        1, static_cast<int>(std::lround(params.feature_subsample * p)));
    CounterRng rng(params.seed, 0x7265657331ULL + round_index);
    rng.shuffle(features);
    features.resize(keep);
    std::sort(features.begin(), features.end());
  }

  RegressionTree tree;
  struct Work {
    int node;
    int depth;
    std::vector<int> rows;
  };
  std::vector<Work> stack;
  {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    tree.nodes.push_back({});
    stack.push_back({0, 0, std::move(all)});
  }

  std::vector<BinStats> hist;
  while (!stack.empty()) {
    Work wk = std::move(stack.back());
    stack.pop_back();

    double w_sum = 0, wt_sum = 0, scale = 0;
    for (int r : wk.rows) {
      const double w = weights[r], t = targets[r];
      w_sum += w;
      wt_sum += w * t;
      scale += w * t * t;
    }
    TreeNode& leaf_view = tree.nodes[wk.node];
    leaf_view.cover = w_sum;
    leaf_view.value = w_sum > 0 ? wt_sum / w_sum : 0.0;

    if (wk.depth >= params.max_depth || w_sum < 2 * params.min_samples_leaf)
      continue;

    const double parent_term = w_sum > 0 ? wt_sum * wt_sum / w_sum : 0.0;
    SplitChoice best;
    for (int f : features) {
      const auto& cuts = design.cuts[f];
      if (cuts.empty()) continue;
      const auto n_bins = cuts.size() + 1;
      hist.assign(n_bins, BinStats{});
      const auto& fbins = design.bins[f];
      for (int r : wk.rows) {
        BinStats& b = hist[fbins[static_cast<std::size_t>(r)]];
        const double w = weights[r];
        b.w += w;
        b.wt += w * targets[r];
      }
      double wl = 0, sl = 0;
      for (std::size_t c = 0; c + 1 < n_bins; ++c) {
        wl += hist[c].w;
        sl += hist[c].wt;
        const double wr = w_sum - wl, sr = wt_sum - sl;
        if (wl < params.min_samples_leaf || wr < params.min_samples_leaf)
          continue;
        if (wl <= 0 || wr <= 0) continue;
        const double gain = sl * sl / wl + sr * sr / wr - parent_term;
        // Relative guard keeps rounding noise from splitting constants.
        if (gain > best.gain && gain > 1e-12 * scale) {
          best = {true, f, static_cast<int>(c), gain};
        }
      }
    }
    if (!best.found) continue;

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(wk.rows.size());
    right_rows.reserve(wk.rows.size());
    const auto& fbins = design.bins[best.feature];
    for (int r : wk.rows)
      (fbins[static_cast<std::size_t>(r)] <= best.cut ? left_rows : right_rows)
          .push_back(r);

    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const int ri = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    TreeNode& nd = tree.nodes[wk.node];
    nd.feature = best.feature;
    nd.threshold = design.cuts[best.feature][best.cut];
    nd.left = li;
    nd.right = ri;
    // Depth-first, left last so it is processed first (cosmetic only).
    stack.push_back({ri, wk.depth + 1, std::move(right_rows)});
    stack.push_back({li, wk.depth + 1, std::move(left_rows)});
  }
  return tree;
}

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets,
                        const Eigen::VectorXd& weights, const TreeParams& params) {
  return fit_tree_binned(BinnedDesign::build(X, params.max_bins), targets,
                         weights, params);
}

double predict_tree(const RegressionTree& tree, std::span<const double> x) {
  return tree.predict(x);
}

Eigen::VectorXd predict_tree(const RegressionTree& tree, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
    out[i] = tree.predict(row);
  }
  return out;
}

Eigen::VectorXd predict_ensemble(const Ensemble& ens, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), ens.base_score);
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[static_cast<std::size_t>(j)] = X(i, j);
    double acc = 0;
    for (const auto& t : ens.trees) acc += t.predict(row);
    out[i] += ens.learning_rate * acc;
  }
  return out;
}

}  // namespace sogmix
