#include "sogmix/two_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sogmix/csv.hpp"
#include "sogmix/metrics.hpp"
#include "sogmix/normal.hpp"
#include "sogmix/rng.hpp"

namespace sogmix {

int derive_binary_label(double sog) {
  if (sog < 0 || !std::isfinite(sog))
    throw DataError("derive_binary_label: sog must be finite and >= 0");
  return sog > 0.0 ? 1 : 0;
}

double sqrt_transform(double sog) {
  if (!(sog > 0))
    throw DataError("sqrt_transform: regression stage needs sog > 0");
  return std::sqrt(sog);
}

double back_transform(double y) { return y * y; }

FoldPlan make_fold_plan(const std::vector<int>& labels, int K, std::uint64_t seed) {
  const auto n = static_cast<int>(labels.size());
  if (K < 2) throw ConfigError("make_fold_plan: K must be >= 2");
  std::vector<int> pos, neg;
  for (int i = 0; i < n; ++i) {
    if (labels[i] == 1) pos.push_back(i);
    else if (labels[i] == 0) neg.push_back(i);
    else throw DataError("make_fold_plan: labels must be 0/1");
  }
  if (pos.empty() || neg.empty())
    throw DataError("make_fold_plan: both classes must be present");

  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.fold_of_row.assign(n, -1);

  // Stratified assignment: shuffle within each class, deal near-equal
  // chunks, so validation prevalence matches the global mix within one row.
  CounterRng rng_pos(seed, 1), rng_neg(seed, 2);
  rng_pos.shuffle(pos);
  rng_neg.shuffle(neg);
  auto deal = [&](const std::vector<int>& cls) {
    const auto m = cls.size();
    for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
      const std::size_t lo = m * k / K, hi = m * (k + 1) / K;
      for (std::size_t i = lo; i < hi; ++i)
        plan.fold_of_row[cls[i]] = static_cast<int>(k);
    }
  };
  deal(pos);
  deal(neg);

  plan.balanced_train.resize(K);
  plan.validation.resize(K);
  for (int k = 0; k < K; ++k) {
    std::vector<int> train_pos, train_neg;
    for (int i = 0; i < n; ++i) {
      if (plan.fold_of_row[i] == k) {
        plan.validation[k].push_back(i);
      } else {
        (labels[i] == 1 ? train_pos : train_neg).push_back(i);
      }
    }
    if (train_pos.empty() || train_neg.empty())
      throw DataError("make_fold_plan: fold " + std::to_string(k) +
                      " training portion lacks a class");
    // Majority-class subsample without replacement to the minority count.
    std::vector<int>& majority = train_pos.size() > train_neg.size() ? train_pos : train_neg;
    const std::size_t minority_count = std::min(train_pos.size(), train_neg.size());
    if (majority.size() > minority_count) {
      CounterRng rng(seed, 0x100 + static_cast<std::uint64_t>(k));
      rng.shuffle(majority);
      majority.resize(minority_count);
    }
    auto& bt = plan.balanced_train[k];
    bt.reserve(train_pos.size() + train_neg.size());
    bt.insert(bt.end(), train_pos.begin(), train_pos.end());
    bt.insert(bt.end(), train_neg.begin(), train_neg.end());
    std::sort(bt.begin(), bt.end());
    std::sort(plan.validation[k].begin(), plan.validation[k].end());
  }
  return plan;
}

namespace {

Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

Eigen::VectorXd subset_vec(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

void assert_fold_hygiene(const FoldPlan& plan, int fold,
                         const std::vector<int>& train_rows) {
  // No OOF row may appear in its own training set.
  for (int r : train_rows)
    if (plan.fold_of_row[r] == fold)
      throw NumericError("fold hygiene violated: validation row in training set");
}

}  // namespace

ClassifierCvResult classifier_cv(const Eigen::MatrixXd& X, const GroupTable& groups,
                                 const std::vector<int>& labels,
                                 const FoldPlan& plan, const TrainConfig& config) {
  const auto n = X.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || groups.n_rows() != n)
    throw DataError("classifier_cv: misaligned inputs");
  ClassifierCvResult out;
  out.oof_latent =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < plan.K; ++k) {
    const auto& train_rows = plan.balanced_train[k];
    assert_fold_hygiene(plan, k, train_rows);
    std::vector<int> train_labels;
    train_labels.reserve(train_rows.size());
    for (int r : train_rows) train_labels.push_back(labels[r]);
    TrainConfig fold_cfg = config;
    fold_cfg.seed = config.seed + static_cast<std::uint64_t>(k) + 1;
    fold_cfg.tree.seed = fold_cfg.seed;
    const MixedBoostModel m = train_probit(subset_rows(X, train_rows),
                                           train_labels,
                                           groups.subset(train_rows), fold_cfg);
    const auto& val = plan.validation[k];
    const GroupTable val_groups = groups.subset(val);
    const Eigen::VectorXd latent =
        predict_latent(m, subset_rows(X, val), &val_groups);
    for (std::size_t i = 0; i < val.size(); ++i)
      out.oof_latent[val[i]] = latent[static_cast<Eigen::Index>(i)];
  }
  // Final model on a balanced set drawn from all rows (same construction as
  // a training fold).
  std::vector<int> pos, neg;
  for (Eigen::Index i = 0; i < n; ++i)
    (labels[i] == 1 ? pos : neg).push_back(static_cast<int>(i));
  std::vector<int>& majority = pos.size() > neg.size() ? pos : neg;
  const std::size_t minority_count = std::min(pos.size(), neg.size());
  if (majority.size() > minority_count) {
    CounterRng rng(plan.seed, 0x200);
    rng.shuffle(majority);
    majority.resize(minority_count);
  }
  std::vector<int> all_rows;
  all_rows.insert(all_rows.end(), pos.begin(), pos.end());
  all_rows.insert(all_rows.end(), neg.begin(), neg.end());
  std::sort(all_rows.begin(), all_rows.end());
  std::vector<int> all_labels;
  all_labels.reserve(all_rows.size());
  for (int r : all_rows) all_labels.push_back(labels[r]);
  out.model = train_probit(subset_rows(X, all_rows), all_labels,
                           groups.subset(all_rows), config);
  return out;
}

RegressorCvResult regressor_cv(const Eigen::MatrixXd& X, const GroupTable& groups,
                               const Eigen::VectorXd& y_sqrt,
                               const std::vector<char>& subset,
                               const FoldPlan& plan, const TrainConfig& config) {
  const auto n = X.rows();
  if (y_sqrt.size() != n || static_cast<Eigen::Index>(subset.size()) != n ||
      groups.n_rows() != n)
    throw DataError("regressor_cv: misaligned inputs");
  RegressorCvResult out;
  out.oof_latent =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < plan.K; ++k) {
    std::vector<int> train_rows, val_rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!subset[i]) continue;
      if (plan.fold_of_row[i] == k) val_rows.push_back(static_cast<int>(i));
      else train_rows.push_back(static_cast<int>(i));
    }
    if (train_rows.empty())
      throw DataError("regressor_cv: fold " + std::to_string(k) +
                      " has no in-subset training rows");
    assert_fold_hygiene(plan, k, train_rows);
    TrainConfig fold_cfg = config;
    fold_cfg.seed = config.seed + 0x1000 + static_cast<std::uint64_t>(k);
    fold_cfg.tree.seed = fold_cfg.seed;
    const MixedBoostModel m =
        train_gaussian(subset_rows(X, train_rows), subset_vec(y_sqrt, train_rows),
                       groups.subset(train_rows), fold_cfg);
    if (!val_rows.empty()) {
      const GroupTable val_groups = groups.subset(val_rows);
      const Eigen::VectorXd latent =
          predict_latent(m, subset_rows(X, val_rows), &val_groups);
      for (std::size_t i = 0; i < val_rows.size(); ++i)
        out.oof_latent[val_rows[i]] = latent[static_cast<Eigen::Index>(i)];
      std::vector<double> pred(val_rows.size()), obs(val_rows.size());
      for (std::size_t i = 0; i < val_rows.size(); ++i) {
        pred[i] = latent[static_cast<Eigen::Index>(i)];
        obs[i] = y_sqrt[val_rows[i]];
      }
      const auto rep = regression_metrics(pred, obs);
      if (rep.r2_transformed) out.fold_r2.push_back(*rep.r2_transformed);
    }
  }
  // Final model on every in-subset row.
  std::vector<int> all_rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (subset[i]) all_rows.push_back(static_cast<int>(i));
  out.model = train_gaussian(subset_rows(X, all_rows),
                             subset_vec(y_sqrt, all_rows),
                             groups.subset(all_rows), config);
  const GroupTable train_groups = groups.subset(all_rows);
  const Eigen::VectorXd fitted =
      predict_latent(out.model, subset_rows(X, all_rows), &train_groups);
  double sq = 0;
  for (std::size_t i = 0; i < all_rows.size(); ++i) {
    const double r = y_sqrt[all_rows[i]] - fitted[static_cast<Eigen::Index>(i)];
    sq += r * r;
  }
  out.smear_sq_resid = all_rows.empty() ? 0 : sq / static_cast<double>(all_rows.size());
  return out;
}

TwoStageResult train_two_stage(const Eigen::MatrixXd& X, const GroupTable& groups,
                               const Eigen::VectorXd& sog, const FoldPlan& plan,
                               const TwoStageConfig& config) {
  const auto n = X.rows();
  if (sog.size() != n || groups.n_rows() != n)
    throw DataError("train_two_stage: misaligned inputs");
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<char> positive(static_cast<std::size_t>(n));
  Eigen::VectorXd y_sqrt = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels[i] = derive_binary_label(sog[i]);
    positive[i] = labels[i] == 1;
    if (positive[i]) y_sqrt[i] = sqrt_transform(sog[i]);
  }

  TwoStageResult res;
  auto clf = classifier_cv(X, groups, labels, plan, config.classifier);
  auto reg = regressor_cv(X, groups, y_sqrt, positive, plan, config.regressor);
  res.model.classifier = std::move(clf.model);
  res.model.regressor = std::move(reg.model);
  res.model.smearing = config.smearing;
  res.model.smear_sq_resid = reg.smear_sq_resid;
  res.oof.fold_of_row = plan.fold_of_row;
  res.oof.classifier_latent = std::move(clf.oof_latent);
  res.oof.regressor_latent = std::move(reg.oof_latent);
  return res;
}

TwoStagePrediction predict_expected_sog(const TwoStageModel& model,
                                        const Eigen::MatrixXd& X,
                                        const GroupTable* groups,
                                        Eigen::Index row) {
  if (row < 0 || row >= X.rows())
    throw DataError("predict_expected_sog: row out of range");
  const Eigen::MatrixXd xr = X.row(row);
  GroupTable gr;
  const GroupTable* grp = nullptr;
  if (groups) {
    gr = groups->subset({static_cast<int>(row)});
    grp = &gr;
  }
  TwoStagePrediction out;
  out.p_positive = normal_cdf(predict_latent(model.classifier, xr, grp)[0]);
  double cond = back_transform(predict_latent(model.regressor, xr, grp)[0]);
  if (model.smearing) cond += model.smear_sq_resid;
  out.conditional_sog = cond;
  out.expected_sog = out.p_positive * out.conditional_sog;
  return out;
}

SafeSpeedCurve::SafeSpeedCurve(std::vector<double> icec_tenths,
                               std::vector<double> max_knots)
    : tenths_(std::move(icec_tenths)), knots_(std::move(max_knots)) {
  if (tenths_.size() != knots_.size() || tenths_.size() < 2)
    throw ConfigError("SafeSpeedCurve: need >= 2 aligned points");
  for (std::size_t i = 1; i < tenths_.size(); ++i) {
    if (tenths_[i] <= tenths_[i - 1])
      throw ConfigError("SafeSpeedCurve: icec_tenths must be strictly increasing");
    if (knots_[i] > knots_[i - 1])
      throw ConfigError("SafeSpeedCurve: max_knots must be nonincreasing");
  }
}

SafeSpeedCurve SafeSpeedCurve::from_csv(const std::string& path) {
  const CsvTable t = CsvTable::read_file(path);
  const int c_t = t.column("icec_tenths");
  const int c_k = t.column("max_knots");
  std::vector<double> tenths, knots;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    tenths.push_back(t.number(i, c_t));
    knots.push_back(t.number(i, c_k));
  }
  return SafeSpeedCurve(std::move(tenths), std::move(knots));
}

double SafeSpeedCurve::max_knots_at(double icec_fraction) const {
  if (!(icec_fraction >= 0.0 && icec_fraction <= 1.0))
    throw DataError("SafeSpeedCurve: icec outside [0,1]");
  const double t = icec_fraction * 10.0;
  if (t <= tenths_.front()) return knots_.front();
  if (t >= tenths_.back()) return knots_.back();
  const auto it = std::upper_bound(tenths_.begin(), tenths_.end(), t);
  const auto hi = static_cast<std::size_t>(it - tenths_.begin());
  const auto lo = hi - 1;
  if (std::isinf(knots_[lo]) || std::isinf(knots_[hi]))
    return std::isinf(knots_[hi]) ? knots_[hi] : knots_[lo];
  const double f = (t - tenths_[lo]) / (tenths_[hi] - tenths_[lo]);
  return knots_[lo] + f * (knots_[hi] - knots_[lo]);
}

int ice_risk_indicator(double sog, double icec, const SafeSpeedCurve& curve) {
  if (sog < 0 || !std::isfinite(sog))
    throw DataError("ice_risk_indicator: bad sog");
  return sog > curve.max_knots_at(icec) ? 1 : 0;
}

RiskGrid aggregate_risk_grid(const std::vector<AisRecord>& records,
                             const std::vector<int>& risk_flags,
                             double resolution) {
  if (records.size() != risk_flags.size())
    throw DataError("aggregate_risk_grid: misaligned inputs");
  std::map<CellId, std::pair<std::int64_t, std::int64_t>> acc;  // n, risky
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (risk_flags[i] != 0 && risk_flags[i] != 1)
      throw DataError("aggregate_risk_grid: flags must be 0/1");
    auto& a = acc[grid_cell(records[i].lon, records[i].lat, resolution)];
    a.first += 1;
    a.second += risk_flags[i];
  }
  RiskGrid grid;
  grid.resolution = resolution;
  for (const auto& [cell, a] : acc)
    grid.cells.push_back({cell, a.first, a.second,
                          static_cast<double>(a.second) /
                              static_cast<double>(a.first)});
  return grid;
}

std::vector<RiskCell> RiskGrid::top_density(int n) const {
  std::vector<RiskCell> sorted = cells;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RiskCell& a, const RiskCell& b) {
                     if (a.n != b.n) return a.n > b.n;
                     return a.cell < b.cell;
                   });
  if (static_cast<int>(sorted.size()) > n) sorted.resize(n);
  return sorted;
}

}  // namespace sogmix
