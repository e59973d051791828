#include "sogmix/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <thread>

namespace sogmix {

namespace {

std::vector<int> used_features(const RegressionTree& tree) {
  std::vector<int> used;
  for (const auto& nd : tree.nodes)
    if (!nd.is_leaf()) used.push_back(nd.feature);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  return used;
}

// Cover-weighted conditional expectation of the tree output with the
// coalition's features pinned to x.
double coalition_value(const RegressionTree& tree, std::span<const double> x,
                       const std::vector<int>& feature_slot, std::uint32_t mask) {
  struct Item {
    int node;
    double weight;
  };
  double acc = 0;
  std::vector<Item> stack{{0, 1.0}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    const TreeNode& nd = tree.nodes[it.node];
    if (nd.is_leaf()) {
      acc += it.weight * nd.value;
      continue;
    }
    const int slot = feature_slot[nd.feature];
    if (slot >= 0 && (mask >> slot) & 1u) {
      stack.push_back({x[nd.feature] <= nd.threshold ? nd.left : nd.right,
                       it.weight});
    } else {
      if (nd.cover <= 0)
        throw NumericError("shap_tree: zero-cover internal node");
      const double wl = tree.nodes[nd.left].cover / nd.cover;
      stack.push_back({nd.left, it.weight * wl});
      stack.push_back({nd.right, it.weight * (1.0 - wl)});
    }
  }
  return acc;
}

}  // namespace

TreeShap shap_tree(const RegressionTree& tree, std::span<const double> x,
                   int n_features) {
  if (tree.nodes.empty()) throw DataError("shap_tree: empty tree");
  TreeShap out;
  out.phi = Eigen::VectorXd::Zero(n_features);

  const std::vector<int> used = used_features(tree);
  const int m = static_cast<int>(used.size());
  std::vector<int> feature_slot(n_features, -1);
  for (int t = 0; t < m; ++t) feature_slot[used[t]] = t;

  const std::uint32_t n_masks = 1u << m;
  std::vector<double> value(n_masks);
  for (std::uint32_t mask = 0; mask < n_masks; ++mask)
    value[mask] = coalition_value(tree, x, feature_slot, mask);
  out.base = value[0];
  if (m == 0) return out;

  // Shapley kernel over the reduced game on the used features; null players
  // do not change the remaining attributions.
  std::vector<double> weight(m);
  std::vector<double> factorial(m + 1, 1.0);
  for (int i = 1; i <= m; ++i) factorial[i] = factorial[i - 1] * i;
  for (int s = 0; s < m; ++s)
    weight[s] = factorial[s] * factorial[m - s - 1] / factorial[m];

  for (int t = 0; t < m; ++t) {
    const std::uint32_t bit = 1u << t;
    double phi = 0;
    for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      phi += weight[std::popcount(mask)] * (value[mask | bit] - value[mask]);
    }
    out.phi[used[t]] = phi;
  }
  return out;
}

ShapMatrix shap_ensemble(const Ensemble& ensemble, const Eigen::MatrixXd& X,
                         const std::string& scale_tag, int n_threads) {
  const Eigen::Index n = X.rows();
  const int p = static_cast<int>(X.cols());
  ShapMatrix out;
  out.scale_tag = scale_tag;
  out.phi = Eigen::MatrixXd::Zero(n, p);

  // Row-level base is identical for every row; compute once from row 0.
  double base_acc = 0;
  if (n > 0) {
    std::vector<double> row0(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) row0[static_cast<std::size_t>(j)] = X(0, j);
    for (const auto& tree : ensemble.trees)
      base_acc += shap_tree(tree, row0, p).base;
  }
  out.base_value = ensemble.base_score + ensemble.learning_rate * base_acc;

  auto worker = [&](Eigen::Index lo, Eigen::Index hi) {
    std::vector<double> row(static_cast<std::size_t>(p));
    for (Eigen::Index i = lo; i < hi; ++i) {
      for (int j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = X(i, j);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
      for (const auto& tree : ensemble.trees)
        acc += shap_tree(tree, row, p).phi;
      out.phi.row(i) = ensemble.learning_rate * acc.transpose();
    }
  };

  int threads = n_threads > 0
                    ? n_threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp<int>(threads, 1, 16);
  if (threads == 1 || n < 256) {
    worker(0, n);
  } else {
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const Eigen::Index lo = t * chunk;
      const Eigen::Index hi = std::min<Eigen::Index>(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

ShapMatrix shap_ensemble(const MixedBoostModel& model, const Eigen::MatrixXd& X,
                         int n_threads) {
  if (X.cols() != kNumFeatures)
    throw DataError("shap_ensemble: feature schema mismatch");
  const std::string tag = model.likelihood == Likelihood::bernoulli_probit
                              ? "probit latent (random effects excluded)"
                              : "sqrt-SOG (random effects excluded)";
  return shap_ensemble(model.ensemble, X, tag, n_threads);
}

std::vector<FeatureImportance> global_importance(const ShapMatrix& shap) {
  if (shap.phi.rows() == 0) throw DataError("global_importance: empty matrix");
  std::vector<FeatureImportance> out;
  for (int j = 0; j < shap.phi.cols(); ++j)
    out.push_back({j, shap.phi.col(j).cwiseAbs().mean()});
  std::stable_sort(out.begin(), out.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) {
                     if (a.mean_abs_shap != b.mean_abs_shap)
                       return a.mean_abs_shap > b.mean_abs_shap;
                     return a.feature < b.feature;
                   });
  return out;
}

BinnedShapSummary binned_marginal(const ShapMatrix& shap, int feature,
                                  std::span<const double> covariate,
                                  ShapBinKind kind, int n_bins) {
  const auto n = shap.phi.rows();
  if (feature < 0 || feature >= shap.phi.cols())
    throw ConfigError("binned_marginal: feature index out of range");
  if (static_cast<Eigen::Index>(covariate.size()) != n)
    throw DataError("binned_marginal: covariate not aligned with shap rows");
  if (n_bins < 1) throw ConfigError("binned_marginal: n_bins must be >= 1");

  double lo = covariate[0], hi = covariate[0];
  for (double v : covariate) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> edges;  // upper edges; last implicit +inf
  if (kind == ShapBinKind::equal_width) {
    const double w = (hi - lo) / n_bins;
    for (int b = 1; b < n_bins; ++b) edges.push_back(lo + w * b);
  } else {
    std::vector<double> vals(covariate.begin(), covariate.end());
    std::sort(vals.begin(), vals.end());
    for (int b = 1; b < n_bins; ++b) {
      const auto pos = vals.size() * static_cast<std::size_t>(b) / n_bins;
      const double v = vals[std::min(pos, vals.size() - 1)];
      if (edges.empty() || v > edges.back()) edges.push_back(v);
    }
  }
  edges.push_back(std::numeric_limits<double>::infinity());

  struct Acc {
    double shap = 0, cov = 0;
    std::int64_t count = 0;
  };
  std::vector<Acc> acc(edges.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(edges.begin(), edges.end(), covariate[i]);
    auto b = static_cast<std::size_t>(it - edges.begin());
    if (b >= acc.size()) b = acc.size() - 1;
    acc[b].shap += shap.phi(i, feature);
    acc[b].cov += covariate[i];
    acc[b].count += 1;
  }
  BinnedShapSummary out;
  out.feature = feature;
  double prev_edge = lo;
  for (std::size_t b = 0; b < acc.size(); ++b) {
    const double upper = b < edges.size() ? edges[b] : hi;
    if (acc[b].count > 0) {
      out.bins.push_back({prev_edge, std::min(upper, hi),
                          acc[b].cov / static_cast<double>(acc[b].count),
                          acc[b].shap / static_cast<double>(acc[b].count),
                          acc[b].count});
    }
    prev_edge = upper;
  }
  return out;
}

std::vector<CategoryShap> categorical_summary(const ShapMatrix& shap, int feature,
                                              std::span<const std::string> labels) {
  const auto n = shap.phi.rows();
  if (feature < 0 || feature >= shap.phi.cols())
    throw ConfigError("categorical_summary: feature index out of range");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DataError("categorical_summary: labels not aligned with shap rows");
  std::map<std::string, std::pair<double, std::int64_t>> acc;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& a = acc[std::string(labels[i])];
    a.first += shap.phi(i, feature);
    a.second += 1;
  }
  std::vector<CategoryShap> out;
  for (const auto& [level, a] : acc)
    out.push_back({level, a.first / static_cast<double>(a.second), a.second});
  std::stable_sort(out.begin(), out.end(),
                   [](const CategoryShap& a, const CategoryShap& b) {
                     if (a.mean_shap != b.mean_shap) return a.mean_shap < b.mean_shap;
                     return a.level < b.level;
                   });
  return out;
}

}  // namespace sogmix
