#include "sogmix/mixed_boost.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "sogmix/normal.hpp"

namespace sogmix {

namespace {

// Dense factorization wins comfortably at the crossed-factor fill levels we
// see up to a few thousand levels; beyond that fall back to sparse LDLT.
constexpr int kDenseQThreshold = 3000;

double log_normal_cdf(double z) {
  if (z > -30.0) return std::log(normal_cdf(z));
  // Asymptotic expansion of the left tail.
  const double z2 = z * z;
  return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

// Stacked one-hot design over the active factors of a GroupTable, with the
// cross products needed by the q x q inner systems.
struct StackedDesign {
  const GroupTable* groups = nullptr;
  std::vector<int> active;   // indices into groups->levels
  std::vector<int> offsets;  // block start per active factor
  int q_total = 0;
  Eigen::Index n = 0;
  bool dense = true;
  Eigen::MatrixXd ztz_dense;
  Eigen::SparseMatrix<double> ztz_sparse;
  std::vector<Eigen::Triplet<double>> pattern;  // reused for weighted builds

  StackedDesign(const GroupTable& g, const std::vector<int>& active_factors)
      : groups(&g), active(active_factors) {
    n = g.n_rows();
    offsets.resize(active.size());
    q_total = 0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      offsets[a] = q_total;
      q_total += g.level_counts[active[a]];
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& lv = g.levels[active[a]];
      for (Eigen::Index i = 0; i < n; ++i)
        if (lv[i] < 0)
          throw DataError("mixed model: unseen group level in training rows");
    }
    dense = q_total <= kDenseQThreshold;
    if (dense) {
      ztz_dense = Eigen::MatrixXd::Zero(q_total, q_total);
      accumulate_dense(ztz_dense, nullptr);
    } else {
      build_sparse(nullptr, ztz_sparse);
    }
  }

  int n_active() const { return static_cast<int>(active.size()); }

  void accumulate_dense(Eigen::MatrixXd& M, const Eigen::VectorXd* w) const {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w ? (*w)[i] : 1.0;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const int ra = offsets[a] + groups->levels[active[a]][i];
        M(ra, ra) += wi;
        for (std::size_t b = a + 1; b < active.size(); ++b) {
          const int rb = offsets[b] + groups->levels[active[b]][i];
          M(ra, rb) += wi;
          M(rb, ra) += wi;
        }
      }
    }
  }

  void build_sparse(const Eigen::VectorXd* w, Eigen::SparseMatrix<double>& out) const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * active.size() * active.size() +
                  static_cast<std::size_t>(q_total));
    // Structural diagonal so the pattern survives any diagonal shift.
    for (int j = 0; j < q_total; ++j) trips.emplace_back(j, j, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w ? (*w)[i] : 1.0;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const int ra = offsets[a] + groups->levels[active[a]][i];
        trips.emplace_back(ra, ra, wi);
        for (std::size_t b = a + 1; b < active.size(); ++b) {
          const int rb = offsets[b] + groups->levels[active[b]][i];
          trips.emplace_back(ra, rb, wi);
          trips.emplace_back(rb, ra, wi);
        }
      }
    }
    out.resize(q_total, q_total);
    out.setFromTriplets(trips.begin(), trips.end());
  }

  Eigen::VectorXd zt_times(const Eigen::VectorXd& r) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(q_total);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& lv = groups->levels[active[a]];
      const int off = offsets[a];
      for (Eigen::Index i = 0; i < n; ++i) out[off + lv[i]] += r[i];
    }
    return out;
  }

  Eigen::VectorXd zt_times_weighted(const Eigen::VectorXd& r,
                                    const Eigen::VectorXd& w) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(q_total);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& lv = groups->levels[active[a]];
      const int off = offsets[a];
      for (Eigen::Index i = 0; i < n; ++i) out[off + lv[i]] += w[i] * r[i];
    }
    return out;
  }

  Eigen::VectorXd z_times(const Eigen::VectorXd& b) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& lv = groups->levels[active[a]];
      const int off = offsets[a];
      for (Eigen::Index i = 0; i < n; ++i) out[i] += b[off + lv[i]];
    }
    return out;
  }

  // Diagonal of the prior precision for the active factors.
  Eigen::VectorXd prior_precision(const RandomEffectsSpec& spec, double scale) const {
    Eigen::VectorXd d(q_total);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const int k = active[a];
      d.segment(offsets[a], groups->level_counts[k])
          .setConstant(scale / spec.variances[k]);
    }
    return d;
  }
};

// Factorization of M = (weighted) ZᵀZ + diag; dense LLT below the size
// threshold, sparse LDLT above it.
struct InnerSolver {
  bool dense = true;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool pattern_done = false;
  double log_det = 0;

  bool factorize(const StackedDesign& sd, const Eigen::VectorXd* obs_weights,
                 const Eigen::VectorXd& diag_add) {
    dense = sd.dense;
    if (dense) {
      Eigen::MatrixXd M;
      if (obs_weights) {
        M = Eigen::MatrixXd::Zero(sd.q_total, sd.q_total);
        sd.accumulate_dense(M, obs_weights);
      } else {
        M = sd.ztz_dense;
      }
      M.diagonal() += diag_add;
      llt.compute(M);
      if (llt.info() != Eigen::Success) return false;
      log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      return true;
    }
    Eigen::SparseMatrix<double> M;
    if (obs_weights) {
      sd.build_sparse(obs_weights, M);
    } else {
      M = sd.ztz_sparse;
    }
    for (int j = 0; j < sd.q_total; ++j) M.coeffRef(j, j) += diag_add[j];
    if (!pattern_done) {
      ldlt.analyzePattern(M);
      pattern_done = true;
    }
    ldlt.factorize(M);
    if (ldlt.info() != Eigen::Success) return false;
    const Eigen::VectorXd d = ldlt.vectorD();
    if ((d.array() <= 0).any()) return false;
    log_det = d.array().log().sum();
    return true;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    return dense ? llt.solve(rhs) : Eigen::VectorXd(ldlt.solve(rhs));
  }
};

std::vector<int> active_factors(const RandomEffectsSpec& spec) {
  std::vector<int> act;
  for (int k = 0; k < spec.n_factors(); ++k)
    if (spec.variances[k] > 0) act.push_back(k);
  return act;
}

void validate_spec(const GroupTable& groups, const RandomEffectsSpec& spec) {
  if (spec.n_factors() != groups.n_factors())
    throw DataError("mixed model: spec factor count does not match groups");
  for (int k = 0; k < spec.n_factors(); ++k) {
    if (spec.level_counts[k] != groups.level_counts[k])
      throw DataError("mixed model: level count mismatch for factor '" +
                      spec.factor_names[k] + "'");
    if (spec.variances[k] < 0)
      throw ConfigError("mixed model: negative variance for factor '" +
                        spec.factor_names[k] + "'");
  }
  if (spec.resid_var <= 0)
    throw ConfigError("mixed model: residual variance must be > 0");
}

std::vector<Eigen::VectorXd> unstack(const StackedDesign& sd,
                                     const Eigen::VectorXd& b,
                                     const GroupTable& groups) {
  std::vector<Eigen::VectorXd> out(groups.n_factors());
  for (int k = 0; k < groups.n_factors(); ++k)
    out[k] = Eigen::VectorXd::Zero(groups.level_counts[k]);
  for (std::size_t a = 0; a < sd.active.size(); ++a)
    out[sd.active[a]] = b.segment(sd.offsets[a], groups.level_counts[sd.active[a]]);
  return out;
}

}  // namespace

GroupTable GroupTable::subset(const std::vector<int>& rows) const {
  GroupTable out;
  out.names = names;
  out.level_counts = level_counts;
  out.levels.resize(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    out.levels[k].reserve(rows.size());
    for (int r : rows) out.levels[k].push_back(levels[k][r]);
  }
  return out;
}

GroupTable GroupTable::from_keys(const GroupKeys& keys) {
  GroupTable t;
  t.names = {"mmsi", "cell", "day"};
  t.levels = {keys.mmsi, keys.cell, keys.day};
  t.level_counts = {keys.q_mmsi, keys.q_cell, keys.q_day};
  return t;
}

RandomEffectsSpec RandomEffectsSpec::for_groups(const GroupTable& groups) {
  RandomEffectsSpec s;
  s.factor_names = groups.names;
  s.level_counts = groups.level_counts;
  s.variances.assign(groups.names.size(), 1.0);
  s.resid_var = 1.0;
  return s;
}

std::vector<Eigen::VectorXd> solve_mixed_equations(const Eigen::VectorXd& offset,
                                                   const Eigen::VectorXd& y,
                                                   const GroupTable& groups,
                                                   const RandomEffectsSpec& spec) {
  validate_spec(groups, spec);
  if (offset.size() != y.size() || y.size() != groups.n_rows())
    throw DataError("solve_mixed_equations: misaligned inputs");
  const auto act = active_factors(spec);
  StackedDesign sd(groups, act);
  if (act.empty()) return unstack(sd, Eigen::VectorXd::Zero(0), groups);
  InnerSolver solver;
  if (!solver.factorize(sd, nullptr, sd.prior_precision(spec, spec.resid_var)))
    throw NumericError("solve_mixed_equations: singular inner system");
  const Eigen::VectorXd b = solver.solve(sd.zt_times(y - offset));
  if (!b.allFinite())
    throw NumericError("solve_mixed_equations: non-finite solution");
  return unstack(sd, b, groups);
}

double marginal_nll_gaussian(const Eigen::VectorXd& offset,
                             const Eigen::VectorXd& y, const GroupTable& groups,
                             const RandomEffectsSpec& spec) {
  validate_spec(groups, spec);
  if (offset.size() != y.size() || y.size() != groups.n_rows())
    throw DataError("marginal_nll_gaussian: misaligned inputs");
  const auto n = static_cast<double>(y.size());
  const Eigen::VectorXd r = y - offset;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const auto act = active_factors(spec);
  if (act.empty()) {
    return 0.5 * (n * log2pi + n * std::log(spec.resid_var) +
                  r.squaredNorm() / spec.resid_var);
  }
  StackedDesign sd(groups, act);
  InnerSolver solver;
  if (!solver.factorize(sd, nullptr, sd.prior_precision(spec, spec.resid_var)))
    throw NumericError("marginal_nll_gaussian: inner system not SPD");
  const Eigen::VectorXd ztr = sd.zt_times(r);
  const Eigen::VectorXd b = solver.solve(ztr);
  const double quad = (r.squaredNorm() - ztr.dot(b)) / spec.resid_var;
  double log_det_sigma =
      (n - sd.q_total) * std::log(spec.resid_var) + solver.log_det;
  for (int k : act)
    log_det_sigma += groups.level_counts[k] * std::log(spec.variances[k]);
  return 0.5 * (n * log2pi + log_det_sigma + quad);
}

LaplaceMode laplace_mode_probit(const Eigen::VectorXd& F,
                                const std::vector<int>& labels,
                                const GroupTable& groups,
                                const RandomEffectsSpec& spec,
                                const Eigen::VectorXd* warm_start) {
  validate_spec(groups, spec);
  const Eigen::Index n = F.size();
  if (static_cast<Eigen::Index>(labels.size()) != n || groups.n_rows() != n)
    throw DataError("laplace_mode_probit: misaligned inputs");
  const auto act = active_factors(spec);
  StackedDesign sd(groups, act);

  Eigen::VectorXd sign(n);
  for (Eigen::Index i = 0; i < n; ++i) sign[i] = labels[i] ? 1.0 : -1.0;

  Eigen::VectorXd b = Eigen::VectorXd::Zero(sd.q_total);
  if (warm_start && warm_start->size() == sd.q_total) b = *warm_start;

  const Eigen::VectorXd prior = sd.prior_precision(spec, 1.0);
  Eigen::VectorXd eta(n), score(n), weight(n);

  auto eval_at = [&](const Eigen::VectorXd& bv, Eigen::VectorXd& eta_out) {
    eta_out = F + sd.z_times(bv);
    double ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) ll += log_normal_cdf(sign[i] * eta_out[i]);
    ll -= 0.5 * bv.dot(prior.cwiseProduct(bv));
    return ll;
  };

  double pll = eval_at(b, eta);
  double grad_norm = 0;
  int iter = 0;
  const int max_iter = 200;
  InnerSolver solver;
  for (; iter < max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = sign[i] * eta[i];
      const double lam = inverse_mills(z);
      score[i] = sign[i] * lam;
      weight[i] = lam * (lam + z);
    }
    if (sd.q_total == 0) break;
    Eigen::VectorXd grad = sd.zt_times(score) - prior.cwiseProduct(b);
    grad_norm = grad.lpNorm<Eigen::Infinity>();
    const double tol =
        1e-8 * std::max(1.0, static_cast<double>(n) / std::max(1, sd.q_total));
    if (grad_norm <= tol) break;
    if (!solver.factorize(sd, &weight, prior))
      throw NumericError("laplace_mode_probit: inner system not SPD");
    const Eigen::VectorXd delta = solver.solve(grad);
    double step = 1.0;
    bool accepted = false;
    const double pll_before = pll;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd b_try = b + step * delta;
      Eigen::VectorXd eta_try;
      const double pll_try = eval_at(b_try, eta_try);
      if (std::isfinite(pll_try) &&
          pll_try >= pll - 1e-12 * std::abs(pll)) {
        b = std::move(b_try);
        eta = std::move(eta_try);
        pll = pll_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      throw NumericError("laplace_mode_probit: Newton diverged after step-halving");
    // Stalled objective at tiny gradient scale counts as converged.
    if (pll - pll_before <= 1e-13 * (1.0 + std::abs(pll))) {
      ++iter;
      break;
    }
  }
  if (iter == max_iter)
    throw NumericError("laplace_mode_probit: Newton failed to converge");

  // Final score/weight at the mode.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = sign[i] * eta[i];
    const double lam = inverse_mills(z);
    score[i] = sign[i] * lam;
    weight[i] = lam * (lam + z);
  }

  LaplaceMode out;
  out.b = b;
  out.score = score;
  out.weight = weight;
  out.penalized_ll = pll;
  out.iterations = iter;
  out.grad_norm = grad_norm;

  // Laplace-approximate marginal: -[ll(b) - 1/2 bᵀD⁻¹b] + 1/2 log det(I + D ZᵀWZ).
  double log_det_term = 0;
  if (sd.q_total > 0) {
    if (!solver.factorize(sd, &weight, sd.prior_precision(spec, 1.0)))
      throw NumericError("laplace_mode_probit: inner system not SPD at mode");
    log_det_term = solver.log_det;
    for (int k : act)
      log_det_term += groups.level_counts[k] * std::log(spec.variances[k]);
  }
  out.marginal_nll = -pll + 0.5 * log_det_term;
  return out;
}

namespace {

struct VarianceObjective {
  virtual ~VarianceObjective() = default;
  virtual double eval(const std::vector<double>& log_vars) = 0;
  virtual int n_params() const = 0;
};

struct GaussianObjective final : VarianceObjective {
  const Eigen::VectorXd& offset;
  const Eigen::VectorXd& y;
  const GroupTable& groups;
  RandomEffectsSpec spec;
  StackedDesign sd;
  InnerSolver solver;
  Eigen::VectorXd residual;
  double rtr;

  GaussianObjective(const Eigen::VectorXd& off, const Eigen::VectorXd& yy,
                    const GroupTable& g, const RandomEffectsSpec& base)
      : offset(off), y(yy), groups(g), spec(base),
        sd(g, [&] {
          std::vector<int> all(g.n_factors());
          std::iota(all.begin(), all.end(), 0);
          return all;
        }()) {
    residual = y - offset;
    rtr = residual.squaredNorm();
  }

  int n_params() const override { return groups.n_factors() + 1; }

  double eval(const std::vector<double>& log_vars) override {
    const int K = groups.n_factors();
    for (int k = 0; k < K; ++k) spec.variances[k] = std::exp(log_vars[k]);
    spec.resid_var = std::exp(log_vars[K]);
    if (!solver.factorize(sd, nullptr, sd.prior_precision(spec, spec.resid_var)))
      return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd ztr = sd.zt_times(residual);
    const Eigen::VectorXd b = solver.solve(ztr);
    const double n = static_cast<double>(y.size());
    const double quad = (rtr - ztr.dot(b)) / spec.resid_var;
    double log_det_sigma =
        (n - sd.q_total) * std::log(spec.resid_var) + solver.log_det;
    for (int k = 0; k < K; ++k)
      log_det_sigma += groups.level_counts[k] * std::log(spec.variances[k]);
    return 0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det_sigma + quad);
  }
};

struct ProbitObjective final : VarianceObjective {
  const Eigen::VectorXd& offset;
  std::vector<int> labels;
  const GroupTable& groups;
  RandomEffectsSpec spec;
  Eigen::VectorXd mode_cache;

  ProbitObjective(const Eigen::VectorXd& off, const Eigen::VectorXd& yy,
                  const GroupTable& g, const RandomEffectsSpec& base)
      : offset(off), groups(g), spec(base) {
    labels.resize(yy.size());
    for (Eigen::Index i = 0; i < yy.size(); ++i)
      labels[i] = yy[i] > 0.5 ? 1 : 0;
  }

  int n_params() const override { return groups.n_factors(); }

  double eval(const std::vector<double>& log_vars) override {
    for (int k = 0; k < groups.n_factors(); ++k)
      spec.variances[k] = std::exp(log_vars[k]);
    try {
      const auto mode = laplace_mode_probit(
          offset, labels, groups, spec,
          mode_cache.size() > 0 ? &mode_cache : nullptr);
      mode_cache = mode.b;
      return mode.marginal_nll;
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

// Golden-section line search on one coordinate, sliding the bracket when the
// minimum lands on an edge.
void line_search(VarianceObjective& obj, std::vector<double>& x, int coord,
                 double& f, double lo_bound, double hi_bound, double tol) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double center = x[coord];
  for (int expand = 0; expand < 8; ++expand) {
    const double window_lo = std::max(lo_bound, center - 2.5);
    const double window_hi = std::min(hi_bound, center + 2.5);
    double lo = window_lo, hi = window_hi;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    auto feval = [&](double v) {
      x[coord] = v;
      return obj.eval(x);
    };
    double f1 = feval(x1), f2 = feval(x2);
    while (hi - lo > tol) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - phi * (hi - lo);
        f1 = feval(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + phi * (hi - lo);
        f2 = feval(x2);
      }
    }
    const double xm = f1 <= f2 ? x1 : x2;
    const double fm = std::min(f1, f2);
    if (fm <= f) {
      x[coord] = xm;
      f = fm;
      const bool at_lo = xm <= window_lo + 2 * tol && window_lo > lo_bound;
      const bool at_hi = xm >= window_hi - 2 * tol && window_hi < hi_bound;
      if (at_lo || at_hi) {
        center = xm;
        continue;
      }
    } else {
      x[coord] = center;  // keep the incumbent
    }
    break;
  }
}

}  // namespace

VarianceEstimate estimate_variances(const Eigen::VectorXd& offset,
                                    const Eigen::VectorXd& y,
                                    const GroupTable& groups,
                                    Likelihood likelihood,
                                    const VarianceOptimizerOptions& opts) {
  if (offset.size() != y.size() || y.size() != groups.n_rows())
    throw DataError("estimate_variances: misaligned inputs");
  for (int k = 0; k < groups.n_factors(); ++k) {
    std::vector<bool> seen(groups.level_counts[k], false);
    int distinct = 0;
    for (auto v : groups.levels[k])
      if (v >= 0 && !seen[v]) {
        seen[v] = true;
        ++distinct;
      }
    if (distinct < 2)
      throw DataError("estimate_variances: factor '" + groups.names[k] +
                      "' has fewer than 2 observed levels");
  }

  const double var_y =
      (y.array() - y.mean()).square().sum() / std::max<double>(1, y.size());
  const double scale = std::max(var_y, 1e-12);
  const double lo_bound = std::log(scale * 1e-10);
  const double hi_bound = std::log(scale * 1e6);

  RandomEffectsSpec base = RandomEffectsSpec::for_groups(groups);
  std::unique_ptr<VarianceObjective> obj;
  if (likelihood == Likelihood::gaussian)
    obj = std::make_unique<GaussianObjective>(offset, y, groups, base);
  else
    obj = std::make_unique<ProbitObjective>(offset, y, groups, base);
  const int P = obj->n_params();

  std::vector<std::vector<double>> starts;
  if (opts.warm_start) {
    const auto& w = *opts.warm_start;
    std::vector<double> s(P);
    for (int k = 0; k < groups.n_factors(); ++k)
      s[k] = std::log(std::clamp(w.variances[k], scale * 1e-10, scale * 1e6));
    if (likelihood == Likelihood::gaussian)
      s[P - 1] = std::log(std::clamp(w.resid_var, scale * 1e-10, scale * 1e6));
    starts.push_back(std::move(s));
  } else {
    for (double m : opts.start_multipliers)
      starts.push_back(std::vector<double>(P, std::log(scale * m)));
  }

  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> best_x;
  bool any_improved = false;
  for (const auto& start : starts) {
    std::vector<double> x = start;
    double f = obj->eval(x);
    const double f0 = f;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      const double f_before = f;
      for (int c = 0; c < P; ++c)
        line_search(*obj, x, c, f, lo_bound, hi_bound, opts.line_tol_log);
      if (f_before - f < opts.rel_tol * std::max(1.0, std::abs(f))) break;
      // Abandon clearly dominated restarts after the first sweep.
      if (f > best_f + 10.0) break;
    }
    if (f < f0 - 1e-12 * std::max(1.0, std::abs(f0))) any_improved = true;
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  if (!std::isfinite(best_f))
    throw NumericError("estimate_variances: objective not finite at any start");

  VarianceEstimate est;
  est.spec = base;
  for (int k = 0; k < groups.n_factors(); ++k)
    est.spec.variances[k] = std::exp(best_x[k]);
  if (likelihood == Likelihood::gaussian)
    est.spec.resid_var = std::exp(best_x[P - 1]);
  est.nll = best_f;
  est.warning = !any_improved;
  return est;
}

namespace {

Eigen::VectorXd tree_predictions(const RegressionTree& tree,
                                 const Eigen::MatrixXd& X) {
  return predict_tree(tree, X);
}

void prune_small_factors(MixedBoostModel& model, double y_var) {
  for (int k = 0; k < model.spec.n_factors(); ++k) {
    if (model.spec.variances[k] < 1e-8 * std::max(y_var, 1e-12))
      model.coefficients[k].setZero();
  }
}

}  // namespace

MixedBoostModel train_gaussian(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const GroupTable& groups, const TrainConfig& config) {
  const Eigen::Index n = X.rows();
  if (n == 0 || y.size() != n || groups.n_rows() != n)
    throw DataError("train_gaussian: misaligned inputs");
  if (!y.allFinite()) throw DataError("train_gaussian: non-finite response");
  if (config.n_rounds < 0 || config.variance_cadence < 1)
    throw ConfigError("train_gaussian: bad config");

  MixedBoostModel model;
  model.likelihood = Likelihood::gaussian;
  model.seed = config.seed;
  model.ensemble.learning_rate = config.learning_rate;
  model.ensemble.base_score = y.mean();

  Eigen::VectorXd F = Eigen::VectorXd::Constant(n, model.ensemble.base_score);
  RandomEffectsSpec spec =
      config.fixed_spec ? *config.fixed_spec : RandomEffectsSpec::for_groups(groups);
  if (config.fixed_spec) validate_spec(groups, spec);

  const BinnedDesign design =
      config.n_rounds > 0 ? BinnedDesign::build(X, config.tree.max_bins)
                          : BinnedDesign{};
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  std::optional<StackedDesign> sd;
  InnerSolver solver;
  bool solver_ready = false;
  auto refresh_solver = [&]() {
    const auto act = active_factors(spec);
    sd.emplace(groups, act);
    solver_ready = false;
    if (!act.empty()) {
      if (!solver.factorize(*sd, nullptr, sd->prior_precision(spec, spec.resid_var)))
        throw NumericError("train_gaussian: inner system not SPD");
      solver_ready = true;
    }
  };

  double prev_nll = std::numeric_limits<double>::infinity();
  bool estimated_once = false;
  refresh_solver();

  for (int round = 0; round < config.n_rounds; ++round) {
    if (!config.fixed_spec && round % config.variance_cadence == 0) {
      VarianceOptimizerOptions vopts = config.variance_opts;
      if (estimated_once) {
        vopts.warm_start = spec;
        vopts.max_sweeps = 2;
      }
      const auto est = estimate_variances(F, y, groups, Likelihood::gaussian, vopts);
      spec = est.spec;
      estimated_once = true;
      if (est.nll > prev_nll + 1e-6 * std::max(1.0, std::abs(prev_nll)))
        throw NumericError(
            "train_gaussian: marginal NLL increased across variance updates");
      prev_nll = est.nll;
      refresh_solver();
    }
    const Eigen::VectorXd r = y - F;
    Eigen::VectorXd g;
    if (solver_ready) {
      const Eigen::VectorXd b = solver.solve(sd->zt_times(r));
      g = (r - sd->z_times(b)) / spec.resid_var;
    } else {
      g = r / spec.resid_var;
    }
    RegressionTree tree = fit_tree_binned(design, g, ones, config.tree,
                                          static_cast<std::uint64_t>(round));
    F += config.learning_rate * tree_predictions(tree, X);
    model.ensemble.trees.push_back(std::move(tree));
  }

  model.spec = spec;
  model.coefficients = solve_mixed_equations(F, y, groups, spec);
  const double var_y =
      (y.array() - y.mean()).square().sum() / static_cast<double>(n);
  prune_small_factors(model, var_y);
  return model;
}

MixedBoostModel train_probit(const Eigen::MatrixXd& X,
                             const std::vector<int>& labels,
                             const GroupTable& groups, const TrainConfig& config) {
  const Eigen::Index n = X.rows();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n ||
      groups.n_rows() != n)
    throw DataError("train_probit: misaligned inputs");
  std::int64_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("train_probit: labels must be 0/1");
    pos += l;
  }
  if (pos == 0 || pos == n)
    throw DataError("train_probit: both classes must be present");
  if (config.n_rounds < 0 || config.variance_cadence < 1)
    throw ConfigError("train_probit: bad config");

  MixedBoostModel model;
  model.likelihood = Likelihood::bernoulli_probit;
  model.seed = config.seed;
  model.ensemble.learning_rate = config.learning_rate;
  const double prevalence = static_cast<double>(pos) / static_cast<double>(n);
  model.ensemble.base_score = normal_icdf(std::clamp(prevalence, 1e-6, 1.0 - 1e-6));

  Eigen::VectorXd F = Eigen::VectorXd::Constant(n, model.ensemble.base_score);
  RandomEffectsSpec spec =
      config.fixed_spec ? *config.fixed_spec : RandomEffectsSpec::for_groups(groups);
  if (config.fixed_spec) {
    validate_spec(groups, spec);
  } else {
    // Modest prior scale until the first scheduled estimation.
    for (auto& v : spec.variances) v = 0.1;
  }
  spec.resid_var = 1.0;

  const BinnedDesign design =
      config.n_rounds > 0 ? BinnedDesign::build(X, config.tree.max_bins)
                          : BinnedDesign{};
  Eigen::VectorXd ylab(n);
  for (Eigen::Index i = 0; i < n; ++i) ylab[i] = labels[i];

  Eigen::VectorXd mode_cache;
  bool estimated_once = false;
  for (int round = 0; round < config.n_rounds; ++round) {
    if (!config.fixed_spec && round % config.variance_cadence == 0) {
      VarianceOptimizerOptions vopts = config.variance_opts;
      if (estimated_once) {
        vopts.warm_start = spec;
        vopts.max_sweeps = 1;
      }
      const auto est =
          estimate_variances(F, ylab, groups, Likelihood::bernoulli_probit, vopts);
      spec = est.spec;
      spec.resid_var = 1.0;
      estimated_once = true;
    }
    const auto mode = laplace_mode_probit(F, labels, groups, spec,
                                          mode_cache.size() ? &mode_cache : nullptr);
    mode_cache = mode.b;
    // Newton-style tree: target score/weight with working weights, so each
    // leaf carries sum(score)/sum(weight).
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i)
      target[i] = mode.score[i] / std::max(mode.weight[i], 1e-12);
    RegressionTree tree = fit_tree_binned(design, target, mode.weight, config.tree,
                                          static_cast<std::uint64_t>(round));
    F += config.learning_rate * tree_predictions(tree, X);
    model.ensemble.trees.push_back(std::move(tree));
  }

  const auto final_mode = laplace_mode_probit(
      F, labels, groups, spec, mode_cache.size() ? &mode_cache : nullptr);
  const auto act = active_factors(spec);
  StackedDesign sd(groups, act);
  model.spec = spec;
  model.coefficients = unstack(sd, final_mode.b, groups);
  prune_small_factors(model, 1.0);
  return model;
}

Eigen::VectorXd predict_latent(const MixedBoostModel& model,
                               const Eigen::MatrixXd& X,
                               const GroupTable* groups) {
  if (X.cols() == 0) throw DataError("predict_latent: empty feature matrix");
  Eigen::VectorXd latent = predict_ensemble(model.ensemble, X);
  if (groups) {
    if (groups->n_rows() != X.rows())
      throw DataError("predict_latent: groups do not match feature rows");
    if (groups->n_factors() != model.spec.n_factors())
      throw DataError("predict_latent: group schema mismatch");
    for (int k = 0; k < model.spec.n_factors(); ++k) {
      const auto& coeff = model.coefficients[k];
      const auto& lv = groups->levels[k];
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const auto level = lv[i];
        if (level >= 0 && level < coeff.size()) latent[i] += coeff[level];
      }
    }
  }
  return latent;
}

Eigen::VectorXd predict_response(const MixedBoostModel& model,
                                 const Eigen::MatrixXd& X,
                                 const GroupTable* groups) {
  Eigen::VectorXd latent = predict_latent(model, X, groups);
  if (model.likelihood == Likelihood::bernoulli_probit)
    for (Eigen::Index i = 0; i < latent.size(); ++i)
      latent[i] = normal_cdf(latent[i]);
  return latent;
}

}  // namespace sogmix
