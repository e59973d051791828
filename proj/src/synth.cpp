#include "sogmix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sogmix/metrics.hpp"
#include "sogmix/normal.hpp"
#include "sogmix/rng.hpp"
#include "sogmix/time.hpp"

namespace sogmix {

namespace {

// Stream ids keep draws independent across purposes.
enum Stream : std::uint64_t {
  kMmsi = 1, kCell, kDay, kSeconds, kCog, kGroup, kStatus,
  kIcecMix, kIcecU, kIcecG1, kIcecG2, kWindZ1, kWindZ2, kBathy, kDist,
  kClfEffect, kRegEffect, kLabel, kNoiseZ,
};

double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  // Box-Muller on two counter slots.
  const double u1 = std::max(u01(counter_hash(seed, stream, 2 * counter)), 1e-300);
  const double u2 = u01(counter_hash(seed, stream, 2 * counter + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Beta(2,2) via two Gamma(2) draws; CDF is x^2 (3 - 2x).
double beta22_draw(std::uint64_t seed, std::uint64_t counter) {
  const double g1 = -std::log(std::max(u01(counter_hash(seed, kIcecG1, 2 * counter)), 1e-300) *
                              std::max(u01(counter_hash(seed, kIcecG1, 2 * counter + 1)), 1e-300));
  const double g2 = -std::log(std::max(u01(counter_hash(seed, kIcecG2, 2 * counter)), 1e-300) *
                              std::max(u01(counter_hash(seed, kIcecG2, 2 * counter + 1)), 1e-300));
  return g1 / (g1 + g2);
}

struct MeanFn {
  // Raw-covariate latents; columns per kFeatureNames[0..7] raw order.
  double operator()(const RawCovariates& raw, Eigen::Index i) const {
    const double icec = raw.continuous(i, 0);
    const double along = raw.continuous(i, 1);
    const double dist = raw.continuous(i, 3);
    const double bathy = raw.continuous(i, 4);
    const double dcog = raw.continuous(i, 7);
    if (name == "flat") return level;
    if (name == "wind_linear") return level + slope * along / 3.0;
    if (name == "coastal") {
      double v = level;
      v += dist_coeff * std::tanh((std::log(std::max(dist, 1e-3)) - std::log(10.0)) / 1.05);
      v += dcog_coeff * (std::exp(-dcog / 7.0) - 0.35);
      v += bathy_coeff * std::tanh((bathy - 110.0) / 75.0);
      v += icec_coeff * icec;
      v += wind_coeff * along / 3.0;
      v += group_offset(raw.vessel_group[i]) + status_offset(raw.status[i]);
      return v;
    }
    throw ConfigError("synth: unknown mean function '" + name + "'");
  }

  static double group_offset(const std::string& g) {
    if (g == "tug_tow") return 0.18;
    if (g == "cargo") return -0.12;
    if (g == "fishing") return -0.20;
    if (g == "tanker") return 0.10;
    if (g == "passenger") return 0.15;
    if (g == "pleasure") return -0.06;
    return 0.0;  // "other"
  }
  static double status_offset(int s) {
    switch (s) {
      case 0: return 0.12;
      case 1: return -0.22;
      case 3: return 0.04;
      case 5: return -0.15;
      case 8: return -0.05;
      default: return 0.0;  // 15
    }
  }

  std::string name = "coastal";
  double level = 0;
  double slope = 0.8;
  double dist_coeff = 1.4;
  double dcog_coeff = 0.9;
  double bathy_coeff = 0.45;
  double icec_coeff = -0.5;
  double wind_coeff = 0.12;
};

template <typename T>
T pick(double u, const std::vector<std::pair<T, double>>& table) {
  double acc = 0;
  for (const auto& [value, p] : table) {
    acc += p;
    if (u < acc) return value;
  }
  return table.back().first;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("synth: n must be >= 1");
  if (cfg.q_mmsi < 2 || cfg.q_cell < 2 || cfg.q_time < 2)
    throw ConfigError("synth: level counts must be >= 2");
  if (!(cfg.prevalence > 0 && cfg.prevalence < 1))
    throw ConfigError("synth: prevalence must lie in (0,1)");
  if (cfg.var_mmsi < 0 || cfg.var_cell < 0 || cfg.var_time < 0 || cfg.resid_var < 0)
    throw ConfigError("synth: variances must be >= 0");
  // Cells tile an 11-row band of the study window at 0.5 degrees.
  const int n_rows_cells = 11;
  const int n_cols_cells = (cfg.q_cell + n_rows_cells - 1) / n_rows_cells;
  if (n_cols_cells * 0.5 > 33.0)
    throw ConfigError("synth: q_cell too large for the study window");
  const double lon0 = -171.0, lat0 = 67.0;

  const std::uint64_t seed = cfg.seed;
  const auto n = static_cast<std::size_t>(cfg.n);
  std::vector<AisRecord> records(n);
  std::vector<EnvSample> env(n);

  static const std::vector<std::pair<std::string, double>> kGroups = {
      {"tug_tow", 0.35}, {"cargo", 0.20},  {"other", 0.15},   {"fishing", 0.12},
      {"tanker", 0.08},  {"passenger", 0.05}, {"pleasure", 0.05}};
  static const std::vector<std::pair<int, double>> kStatuses = {
      {0, 0.60}, {1, 0.12}, {3, 0.08}, {5, 0.08}, {8, 0.06}, {15, 0.06}};

  for (std::size_t i = 0; i < n; ++i) {
    AisRecord& r = records[i];
    const auto mmsi_id = counter_hash(seed, kMmsi, i) % cfg.q_mmsi;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "V%05d", static_cast<int>(mmsi_id));
    r.mmsi = buf;

    const auto cell_id = static_cast<int>(counter_hash(seed, kCell, i) % cfg.q_cell);
    const int cx = cell_id % n_cols_cells, cy = cell_id / n_cols_cells;
    // Strictly inside the cell so the 0.5-degree assignment is exact.
    const double ux = 0.02 + 0.96 * u01(counter_hash(seed, kCell, i + (1ull << 40)));
    const double uy = 0.02 + 0.96 * u01(counter_hash(seed, kCell, i + (2ull << 40)));
    r.lon = lon0 + (cx + ux) * 0.5;
    r.lat = lat0 + (cy + uy) * 0.5;

    // 120-day open-water seasons starting 2010-07-01.
    const auto day_id = static_cast<int>(counter_hash(seed, kDay, i) % cfg.q_time);
    const int year = day_id / 120, doy = day_id % 120;
    const std::int64_t day = days_from_civil(2010 + year, 7, 1) + doy;
    r.epoch_seconds = day * 86400 +
                      static_cast<std::int64_t>(counter_hash(seed, kSeconds, i) % 86400);

    r.cog = 360.0 * u01(counter_hash(seed, kCog, i));
    if (r.cog >= 360.0) r.cog = 0.0;
    r.vessel_group = pick(u01(counter_hash(seed, kGroup, i)), kGroups);
    r.nav_status = pick(u01(counter_hash(seed, kStatus, i)), kStatuses);

    EnvSample& e = env[i];
    // icec: 60% near-zero mass U[0, 0.02], 40% Beta(2,2) tail.
    e.icec = u01(counter_hash(seed, kIcecMix, i)) < 0.6
                 ? 0.02 * u01(counter_hash(seed, kIcecU, i))
                 : beta22_draw(seed, i);
    // Winds: bivariate normal, mean (2, 0), sd 3, correlation 0.3.
    const double z1 = normal_draw(seed, kWindZ1, i);
    const double z2 = normal_draw(seed, kWindZ2, i);
    e.u10 = 2.0 + 3.0 * z1;
    e.v10 = 3.0 * (0.3 * z1 + std::sqrt(1.0 - 0.09) * z2);
    e.bathy = std::exp(3.5 + 0.8 * normal_draw(seed, kBathy, i));
    // Distance to coast: log-uniform over [0.1, 300] km.
    const double lu = u01(counter_hash(seed, kDist, i));
    e.dist_to_coast = std::exp(std::log(0.1) + lu * (std::log(300.0) - std::log(0.1)));
  }

  canonicalize(records, env);
  const RawCovariates raw = compute_raw_covariates(records, env, 0.5);

  // Recover generator level ids from the canonical records.
  std::vector<int> mmsi_id(n), cell_id(n), day_id(n);
  for (std::size_t i = 0; i < n; ++i) {
    mmsi_id[i] = std::atoi(records[i].mmsi.c_str() + 1);
    const CellId c = grid_cell(records[i].lon, records[i].lat, 0.5);
    const int cx = static_cast<int>(c.ix - static_cast<std::int64_t>(lon0 / 0.5));
    const int cy = static_cast<int>(c.iy - static_cast<std::int64_t>(lat0 / 0.5));
    cell_id[i] = cy * n_cols_cells + cx;
    const std::int64_t day = epoch_day_of(records[i].epoch_seconds);
    int y = 0, m = 0, d = 0;
    civil_from_days(day, y, m, d);
    day_id[i] = (y - 2010) * 120 + static_cast<int>(day - days_from_civil(y, 7, 1));
  }

  SynthTruth truth;
  truth.clf_effects.resize(3);
  truth.reg_effects.resize(3);
  const std::array<int, 3> q = {cfg.q_mmsi, cfg.q_cell, cfg.q_time};
  const std::array<double, 3> var = {cfg.var_mmsi, cfg.var_cell, cfg.var_time};
  for (int k = 0; k < 3; ++k) {
    truth.clf_effects[k].resize(q[k]);
    truth.reg_effects[k].resize(q[k]);
    for (int l = 0; l < q[k]; ++l) {
      truth.clf_effects[k][l] =
          std::sqrt(var[k]) * normal_draw(seed, kClfEffect + 100 * k, l);
      truth.reg_effects[k][l] =
          std::sqrt(var[k]) * normal_draw(seed, kRegEffect + 100 * k, l);
    }
  }

  MeanFn clf_fn{cfg.clf_mean, 0.0};
  MeanFn reg_fn{cfg.reg_mean, cfg.reg_mean_level};
  reg_fn.dist_coeff = 0.8;
  reg_fn.dcog_coeff = 0.5;  // small course changes go with higher speed
  reg_fn.bathy_coeff = 0.3;
  reg_fn.icec_coeff = -0.3;
  reg_fn.wind_coeff = 0.08;

  const auto ni = static_cast<Eigen::Index>(n);
  truth.clf_latent.resize(ni);
  truth.reg_latent.resize(ni);
  truth.bayes_prob.resize(ni);
  truth.gaussian_response.resize(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const double clf_re = truth.clf_effects[0][mmsi_id[i]] +
                          truth.clf_effects[1][cell_id[i]] +
                          truth.clf_effects[2][day_id[i]];
    const double reg_re = truth.reg_effects[0][mmsi_id[i]] +
                          truth.reg_effects[1][cell_id[i]] +
                          truth.reg_effects[2][day_id[i]];
    truth.clf_latent[i] = clf_fn(raw, i) + clf_re;
    truth.reg_latent[i] = reg_fn(raw, i) + reg_re;
  }

  // Calibrate the classification intercept so mean Phi(c + latent) hits the
  // target prevalence, then draw labels and speeds.
  double lo = -12, hi = 12;
  for (int it = 0; it < 200; ++it) {
    const double c = (lo + hi) / 2;
    double mean_p = 0;
    for (Eigen::Index i = 0; i < ni; ++i)
      mean_p += normal_cdf(c + truth.clf_latent[i]);
    mean_p /= static_cast<double>(ni);
    (mean_p < cfg.prevalence ? lo : hi) = c;
  }
  const double intercept = (lo + hi) / 2;
  {
    double mean_p = 0;
    for (Eigen::Index i = 0; i < ni; ++i)
      mean_p += normal_cdf(intercept + truth.clf_latent[i]);
    mean_p /= static_cast<double>(ni);
    if (std::abs(mean_p - cfg.prevalence) > 0.02)
      throw NumericError("synth: prevalence target infeasible for this mean function");
  }

  for (Eigen::Index i = 0; i < ni; ++i) {
    truth.clf_latent[i] += intercept;
    truth.bayes_prob[i] = normal_cdf(truth.clf_latent[i]);
    const double noise = std::sqrt(cfg.resid_var) *
                         normal_draw(seed, kNoiseZ, static_cast<std::uint64_t>(i));
    truth.gaussian_response[i] = truth.reg_latent[i] + noise;
    const int label =
        u01(counter_hash(seed, kLabel, static_cast<std::uint64_t>(i))) <
        truth.bayes_prob[i];
    if (label) {
      const double y = std::max(truth.gaussian_response[i], 0.05);
      records[i].sog = y * y;
    } else {
      records[i].sog = 0.0;
    }
  }

  SynthData data;
  data.records = std::move(records);
  data.env = std::move(env);
  data.truth = std::move(truth);
  return data;
}

double bayes_auc(const Eigen::VectorXd& latent, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(latent.size()) != labels.size())
    throw DataError("bayes_auc: misaligned inputs");
  std::vector<double> scores(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    scores[i] = latent[static_cast<Eigen::Index>(i)];
  return roc_auc(scores, labels);
}

}  // namespace sogmix
