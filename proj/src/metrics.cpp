#include "sogmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace sogmix {

namespace {

void check_scored_input(std::span<const double> scores,
                        std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw DataError("metrics: scores and labels must be aligned and nonempty");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("metrics: non-finite score");
  for (int l : labels)
    if (l != 0 && l != 1) throw DataError("metrics: labels must be 0/1");
}

// Indices sorted by descending score; stable in original order for ties.
std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_scored_input(scores, labels);
  const std::int64_t n_pos = std::accumulate(labels.begin(), labels.end(), std::int64_t{0});
  const std::int64_t n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("roc_auc: both classes must be present");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, accumulate the positive-class rank sum.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) *
                                      (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores,
                                  std::span<const int> labels) {
  check_scored_input(scores, labels);
  const std::int64_t n_pos = std::accumulate(labels.begin(), labels.end(), std::int64_t{0});
  const std::int64_t n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("roc_curve: both classes must be present");
  auto idx = order_by_score_desc(scores);
  std::vector<CurvePoint> curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      if (labels[idx[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos), s});
  }
  return curve;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores,
                                 std::span<const int> labels) {
  check_scored_input(scores, labels);
  const std::int64_t n_pos = std::accumulate(labels.begin(), labels.end(), std::int64_t{0});
  if (n_pos == 0) throw DataError("pr_curve: no positive labels");
  auto idx = order_by_score_desc(scores);
  std::vector<CurvePoint> curve;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      if (labels[idx[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    curve.push_back({static_cast<double>(tp) / static_cast<double>(n_pos),
                     static_cast<double>(tp) / static_cast<double>(tp + fp), s});
  }
  return curve;
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = pr_curve(scores, labels);
  double area = 0, prev_recall = 0;
  for (const auto& pt : curve) {
    area += (pt.x - prev_recall) * pt.y;  // step interpolation in recall
    prev_recall = pt.x;
  }
  return area;
}

ConfusionCounts confusion_counts(std::span<const double> probabilities,
                                 std::span<const int> labels, double threshold) {
  if (probabilities.size() != labels.size() || probabilities.empty())
    throw DataError("confusion_counts: misaligned inputs");
  ConfusionCounts c;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const bool pred_pos = probabilities[i] >= threshold;
    if (labels[i] == 1)
      (pred_pos ? c.tp : c.fn) += 1;
    else
      (pred_pos ? c.fp : c.tn) += 1;
  }
  return c;
}

ClassificationReport confusion_metrics(const ConfusionCounts& c) {
  const double n = static_cast<double>(c.total());
  if (c.total() <= 0) throw DataError("confusion_metrics: empty counts");
  auto ratio = [](std::int64_t num, std::int64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  ClassificationReport r;
  r.accuracy = (static_cast<double>(c.tp) + static_cast<double>(c.tn)) / n;
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.npv = ratio(c.tn, c.tn + c.fn);
  r.prevalence = (static_cast<double>(c.tp) + static_cast<double>(c.fn)) / n;
  r.detection_rate = static_cast<double>(c.tp) / n;
  r.detection_prevalence = (static_cast<double>(c.tp) + static_cast<double>(c.fp)) / n;
  if (r.sensitivity && r.specificity)
    r.balanced_accuracy = (*r.sensitivity + *r.specificity) / 2.0;
  // Cohen's kappa from the marginal products.
  const double p_o = *r.accuracy;
  const double p_yes = (static_cast<double>(c.tp) + static_cast<double>(c.fn)) / n *
                       (static_cast<double>(c.tp) + static_cast<double>(c.fp)) / n;
  const double p_no = (static_cast<double>(c.fp) + static_cast<double>(c.tn)) / n *
                      (static_cast<double>(c.fn) + static_cast<double>(c.tn)) / n;
  const double p_e = p_yes + p_no;
  if (p_e < 1.0) r.kappa = (p_o - p_e) / (1.0 - p_e);
  return r;
}

CalibrationTable calibration_bins(std::span<const double> predicted,
                                  std::span<const double> observed, int n_bins) {
  if (n_bins < 1) throw ConfigError("calibration_bins: n_bins must be >= 1");
  if (predicted.size() != observed.size() ||
      predicted.size() < static_cast<std::size_t>(n_bins))
    throw DataError("calibration_bins: need at least n_bins aligned rows");
  auto idx = order_by_score_desc(predicted);
  std::reverse(idx.begin(), idx.end());  // ascending by prediction
  const std::size_t n = idx.size();
  CalibrationTable table;
  std::size_t start = 0;
  for (int b = 0; b < n_bins; ++b) {
    const std::size_t end = n * (static_cast<std::size_t>(b) + 1) / n_bins;
    CalibrationBin bin;
    for (std::size_t k = start; k < end; ++k) {
      bin.mean_predicted += predicted[idx[k]];
      bin.mean_observed += observed[idx[k]];
      bin.count += 1;
    }
    if (bin.count > 0) {
      bin.mean_predicted /= static_cast<double>(bin.count);
      bin.mean_observed /= static_cast<double>(bin.count);
      table.bins.push_back(bin);
    }
    start = end;
  }
  return table;
}

RegressionReport regression_metrics(std::span<const double> pred_sqrt,
                                    std::span<const double> obs_sqrt) {
  if (pred_sqrt.size() != obs_sqrt.size() || pred_sqrt.empty())
    throw DataError("regression_metrics: misaligned inputs");
  auto compute = [](std::span<const double> pred, std::span<const double> obs,
                    std::optional<double>& r2, double& mae, double& rmse) {
    const double n = static_cast<double>(obs.size());
    double mean_obs = 0;
    for (double v : obs) mean_obs += v;
    mean_obs /= n;
    double sse = 0, sst = 0, abs_sum = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const double e = obs[i] - pred[i];
      sse += e * e;
      abs_sum += std::abs(e);
      sst += (obs[i] - mean_obs) * (obs[i] - mean_obs);
    }
    mae = abs_sum / n;
    rmse = std::sqrt(sse / n);
    if (sst > 0)
      r2 = 1.0 - sse / sst;
    else
      r2 = std::nullopt;  // zero-variance observations
  };
  RegressionReport rep;
  compute(pred_sqrt, obs_sqrt, rep.r2_transformed, rep.mae_transformed,
          rep.rmse_transformed);
  std::vector<double> pred_orig(pred_sqrt.size()), obs_orig(obs_sqrt.size());
  for (std::size_t i = 0; i < pred_sqrt.size(); ++i) {
    pred_orig[i] = pred_sqrt[i] * pred_sqrt[i];
    obs_orig[i] = obs_sqrt[i] * obs_sqrt[i];
  }
  compute(pred_orig, obs_orig, rep.r2_original, rep.mae_original,
          rep.rmse_original);
  return rep;
}

std::vector<StratumBin> stratified_diagnostic(std::span<const double> observed,
                                              std::span<const double> predicted,
                                              std::span<const double> covariate,
                                              std::span<const std::string> strata,
                                              const BinSpec& spec) {
  const std::size_t n = observed.size();
  if (predicted.size() != n || covariate.size() != n || strata.size() != n || n == 0)
    throw DataError("stratified_diagnostic: misaligned inputs");
  if (spec.n_bins < 1) throw ConfigError("stratified_diagnostic: n_bins >= 1");

  std::map<std::string, std::vector<std::size_t>> by_stratum;
  for (std::size_t i = 0; i < n; ++i) by_stratum[std::string(strata[i])].push_back(i);

  std::vector<StratumBin> out;
  for (const auto& [name, rows] : by_stratum) {
    double lo = covariate[rows[0]], hi = lo;
    for (auto r : rows) {
      lo = std::min(lo, covariate[r]);
      hi = std::max(hi, covariate[r]);
    }
    std::vector<double> edges;  // bin upper edges, last = +inf
    if (spec.kind == BinSpec::Kind::equal_width) {
      const double w = (hi - lo) / spec.n_bins;
      for (int b = 1; b < spec.n_bins; ++b) edges.push_back(lo + w * b);
    } else {
      std::vector<double> vals;
      vals.reserve(rows.size());
      for (auto r : rows) vals.push_back(covariate[r]);
      std::sort(vals.begin(), vals.end());
      for (int b = 1; b < spec.n_bins; ++b) {
        const auto pos = vals.size() * static_cast<std::size_t>(b) / spec.n_bins;
        const double v = vals[std::min(pos, vals.size() - 1)];
        if (edges.empty() || v > edges.back()) edges.push_back(v);
      }
    }
    edges.push_back(std::numeric_limits<double>::infinity());

    struct Acc { double obs = 0, pred = 0, cov = 0; std::int64_t count = 0; };
    std::vector<Acc> acc(edges.size());
    for (auto r : rows) {
      const auto it = std::lower_bound(edges.begin(), edges.end(), covariate[r]);
      auto b = static_cast<std::size_t>(it - edges.begin());
      if (b >= acc.size()) b = acc.size() - 1;
      acc[b].obs += observed[r];
      acc[b].pred += predicted[r];
      acc[b].cov += covariate[r];
      acc[b].count += 1;
    }
    for (const auto& a : acc) {
      if (a.count == 0) continue;  // empty bins dropped
      out.push_back({name, a.cov / static_cast<double>(a.count),
                     a.obs / static_cast<double>(a.count),
                     a.pred / static_cast<double>(a.count), a.count});
    }
  }
  return out;
}

std::vector<GroupResidual> residual_by_group(std::span<const double> observed,
                                             std::span<const double> predicted,
                                             std::span<const std::string> groups) {
  const std::size_t n = observed.size();
  if (predicted.size() != n || groups.size() != n)
    throw DataError("residual_by_group: misaligned inputs");
  std::map<std::string, std::pair<double, std::int64_t>> acc;
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = acc[std::string(groups[i])];
    a.first += observed[i] - predicted[i];
    a.second += 1;
  }
  std::vector<GroupResidual> out;
  out.reserve(acc.size());
  for (const auto& [g, a] : acc)
    out.push_back({g, a.first / static_cast<double>(a.second), a.second});
  return out;
}

}  // namespace sogmix
