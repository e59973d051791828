#include "sogmix/ais_features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sogmix/time.hpp"

namespace sogmix {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

WindComponents derive_wind_components(double u10, double v10, double cog_deg) {
  if (!std::isfinite(u10) || !std::isfinite(v10) || !std::isfinite(cog_deg))
    throw DataError("derive_wind_components: non-finite input");
  const double c = cog_deg * kDegToRad;
  const double s = std::sin(c), k = std::cos(c);
  return {u10 * s + v10 * k, u10 * k - v10 * s};
}

double delta_cog(double prev_cog, double curr_cog) {
  if (!std::isfinite(prev_cog) || !std::isfinite(curr_cog))
    throw DataError("delta_cog: non-finite input");
  double d = std::fmod(curr_cog - prev_cog + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return std::abs(d - 180.0);
}

CogEncoding encode_cog(double cog_deg) {
  const double c = cog_deg * kDegToRad;
  return {std::sin(c), std::cos(c)};
}

CellId grid_cell(double lon, double lat, double resolution) {
  if (resolution <= 0) throw ConfigError("grid_cell: resolution must be > 0");
  if (!std::isfinite(lon) || !std::isfinite(lat) || lon < -180 || lon > 180 ||
      lat < -90 || lat > 90)
    throw DataError("grid_cell: coordinates out of range");
  return {static_cast<std::int64_t>(std::floor(lon / resolution)),
          static_cast<std::int64_t>(std::floor(lat / resolution))};
}

std::int64_t assign_time_id(std::int64_t epoch_seconds) {
  return epoch_day_of(epoch_seconds);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& columns,
                               const std::vector<std::string>& names) {
  const auto n = columns.rows();
  if (n < 2) throw DataError("Standardizer: need at least 2 rows");
  Standardizer s;
  s.mean_ = columns.colwise().mean();
  Eigen::MatrixXd centered = columns.rowwise() - s.mean_.transpose();
  s.sd_ = (centered.array().square().colwise().sum() / static_cast<double>(n))
              .sqrt();
  for (Eigen::Index j = 0; j < s.sd_.size(); ++j) {
    if (s.sd_[j] <= 0) {
      std::string name = j < static_cast<Eigen::Index>(names.size())
                             ? names[j]
                             : "column " + std::to_string(j);
      throw DataError("Standardizer: constant column '" + name + "' (sd = 0)");
    }
  }
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& columns) const {
  return (columns.rowwise() - mean_.transpose()).array().rowwise() /
         sd_.transpose().array();
}

Eigen::MatrixXd Standardizer::inverse(const Eigen::MatrixXd& standardized) const {
  return (standardized.array().rowwise() * sd_.transpose().array()).rowwise() +
         mean_.transpose().array();
}

void canonicalize(std::vector<AisRecord>& records, std::vector<EnvSample>& env) {
  if (records.size() != env.size())
    throw DataError("canonicalize: records and env not aligned 1:1");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  auto key_less = [&](std::size_t a, std::size_t b) {
    const AisRecord& ra = records[a];
    const AisRecord& rb = records[b];
    if (ra.mmsi != rb.mmsi) return ra.mmsi < rb.mmsi;
    if (ra.epoch_seconds != rb.epoch_seconds)
      return ra.epoch_seconds < rb.epoch_seconds;
    if (ra.lon != rb.lon) return ra.lon < rb.lon;
    if (ra.lat != rb.lat) return ra.lat < rb.lat;
    if (ra.sog != rb.sog) return ra.sog < rb.sog;
    return ra.cog < rb.cog;
  };
  std::stable_sort(order.begin(), order.end(), key_less);
  std::vector<AisRecord> r2(records.size());
  std::vector<EnvSample> e2(env.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    r2[i] = std::move(records[order[i]]);
    e2[i] = env[order[i]];
  }
  records = std::move(r2);
  env = std::move(e2);
}

RawCovariates compute_raw_covariates(const std::vector<AisRecord>& records,
                                     const std::vector<EnvSample>& env,
                                     double grid_resolution) {
  if (records.size() != env.size())
    throw DataError("compute_raw_covariates: records and env not aligned 1:1");
  const auto n = static_cast<Eigen::Index>(records.size());
  RawCovariates raw;
  raw.continuous.resize(n, kNumContinuous);
  raw.vessel_group.resize(records.size());
  raw.status.resize(records.size());
  raw.mmsi.resize(records.size());
  raw.cell.resize(records.size());
  raw.day.resize(records.size());
  raw.sog.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AisRecord& r = records[i];
    const EnvSample& e = env[i];
    if (r.sog < 0) throw DataError("negative SOG for mmsi " + r.mmsi);
    auto wind = derive_wind_components(e.u10, e.v10, r.cog);
    auto enc = encode_cog(r.cog);
    double dcog = 0.0;
    if (i > 0 && records[i - 1].mmsi == r.mmsi)
      dcog = delta_cog(records[i - 1].cog, r.cog);
    raw.continuous(i, 0) = e.icec;
    raw.continuous(i, 1) = wind.along;
    raw.continuous(i, 2) = wind.cross;
    raw.continuous(i, 3) = e.dist_to_coast;
    raw.continuous(i, 4) = e.bathy;
    raw.continuous(i, 5) = enc.sin_c;
    raw.continuous(i, 6) = enc.cos_c;
    raw.continuous(i, 7) = dcog;
    raw.vessel_group[i] = r.vessel_group;
    raw.status[i] = r.nav_status;
    raw.mmsi[i] = r.mmsi;
    raw.cell[i] = grid_cell(r.lon, r.lat, grid_resolution);
    raw.day[i] = assign_time_id(r.epoch_seconds);
    raw.sog[i] = r.sog;
  }
  return raw;
}

FeatureSchema fit_schema(const RawCovariates& raw, const std::vector<int>& fit_rows,
                         double grid_resolution) {
  std::vector<int> rows = fit_rows;
  if (rows.empty()) {
    rows.resize(raw.mmsi.size());
    std::iota(rows.begin(), rows.end(), 0);
  }
  FeatureSchema schema;
  schema.grid_resolution = grid_resolution;
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), kNumContinuous);
  for (std::size_t i = 0; i < rows.size(); ++i)
    sub.row(static_cast<Eigen::Index>(i)) = raw.continuous.row(rows[i]);
  std::vector<std::string> names(kFeatureNames.begin(),
                                 kFeatureNames.begin() + kNumContinuous);
  schema.standardizer = Standardizer::fit(sub, names);
  for (int r : rows) {
    schema.vessel_group.fit_insert(raw.vessel_group[r]);
    schema.status.fit_insert(raw.status[r]);
    schema.mmsi.fit_insert(raw.mmsi[r]);
    schema.cell.fit_insert(raw.cell[r]);
    schema.day.fit_insert(raw.day[r]);
  }
  return schema;
}

FeatureTable apply_schema(const RawCovariates& raw, const FeatureSchema& schema) {
  const auto n = raw.continuous.rows();
  FeatureTable t;
  t.X.resize(n, kNumFeatures);
  t.X.leftCols(kNumContinuous) = schema.standardizer.transform(raw.continuous);
  t.groups.mmsi.resize(n);
  t.groups.cell.resize(n);
  t.groups.day.resize(n);
  t.groups.q_mmsi = schema.mmsi.size();
  t.groups.q_cell = schema.cell.size();
  t.groups.q_day = schema.day.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    t.X(i, kVesselGroupFeature) = schema.vessel_group.index(raw.vessel_group[i]);
    t.X(i, kStatusFeature) = schema.status.index(raw.status[i]);
    t.groups.mmsi[i] = schema.mmsi.index(raw.mmsi[i]);
    t.groups.cell[i] = schema.cell.index(raw.cell[i]);
    t.groups.day[i] = schema.day.index(raw.day[i]);
  }
  t.sog = raw.sog;
  return t;
}

FeatureTable build_feature_matrix(std::vector<AisRecord> records,
                                  std::vector<EnvSample> env,
                                  const FeatureSchema& schema) {
  canonicalize(records, env);
  RawCovariates raw = compute_raw_covariates(records, env, schema.grid_resolution);
  return apply_schema(raw, schema);
}

void mean_impute_by_group(std::vector<double>& values,
                          const std::vector<std::string>& group_labels) {
  if (values.size() != group_labels.size())
    throw DataError("mean_impute_by_group: misaligned inputs");
  std::map<std::string, std::pair<double, std::int64_t>> acc;
  double global_sum = 0;
  std::int64_t global_n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isfinite(values[i])) {
      auto& a = acc[group_labels[i]];
      a.first += values[i];
      a.second += 1;
      global_sum += values[i];
      global_n += 1;
    }
  }
  if (global_n == 0) throw DataError("mean_impute_by_group: no finite values");
  const double global_mean = global_sum / static_cast<double>(global_n);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::isfinite(values[i])) continue;
    auto it = acc.find(group_labels[i]);
    values[i] = (it != acc.end() && it->second.second > 0)
                    ? it->second.first / static_cast<double>(it->second.second)
                    : global_mean;
  }
}

}  // namespace sogmix
