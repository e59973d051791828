#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sogmix/common.hpp"

namespace sogmix {

// One AIS observation as ingested (after bounds/season filtering).
struct AisRecord {
  std::string mmsi;
  std::int64_t epoch_seconds = 0;  // UTC
  double lon = 0;                  // [-180, 180]
  double lat = 0;                  // [-90, 90]
  double sog = 0;                  // knots, >= 0
  double cog = 0;                  // degrees, [0, 360)
  std::string vessel_group;
  int nav_status = 0;  // 0..15
};

// Environmental covariates collocated to one AIS observation.
struct EnvSample {
  double icec = 0;           // fractional ice cover, [0, 1]
  double u10 = 0;            // eastward 10-m wind, m/s
  double v10 = 0;            // northward 10-m wind, m/s
  double bathy = 0;          // seafloor depth, m (positive down)
  double dist_to_coast = 0;  // km, >= 0
};

struct WindComponents {
  double along = 0;  // positive = tailwind
  double cross = 0;  // positive = port toward starboard
};

// Projects (u10, v10) onto the vessel heading (sin c, cos c) in the
// east/north frame. Rejects non-finite inputs.
WindComponents derive_wind_components(double u10, double v10, double cog_deg);

// Absolute circular course change in [0, 180].
double delta_cog(double prev_cog, double curr_cog);

struct CogEncoding {
  double sin_c = 0;
  double cos_c = 1;
};
CogEncoding encode_cog(double cog_deg);

// Integer SW-corner cell coordinates at the given resolution
// (closed lower edge, open upper edge).
struct CellId {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  auto operator<=>(const CellId&) const = default;
};
CellId grid_cell(double lon, double lat, double resolution);
inline double cell_lon(CellId c, double res) { return static_cast<double>(c.ix) * res; }
inline double cell_lat(CellId c, double res) { return static_cast<double>(c.iy) * res; }

// Calendar-day index (days since 1970-01-01 UTC).
std::int64_t assign_time_id(std::int64_t epoch_seconds);

// Per-column affine transform to zero mean and unit variance.
// Population standard deviation (divide by n).
class Standardizer {
 public:
  static Standardizer fit(const Eigen::MatrixXd& columns,
                          const std::vector<std::string>& names);

  Eigen::MatrixXd transform(const Eigen::MatrixXd& columns) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& standardized) const;

  const Eigen::VectorXd& means() const { return mean_; }
  const Eigen::VectorXd& sds() const { return sd_; }

  Eigen::VectorXd mean_;
  Eigen::VectorXd sd_;
};

// Dense integer encoding of an ordered set of observed keys.
// Unseen keys map to kUnknownCategory (-1).
template <typename Key>
class Vocabulary {
 public:
  void fit_insert(const Key& k) {
    if (!index_.count(k)) {
      int id = static_cast<int>(labels_.size());
      index_.emplace(k, id);
      labels_.push_back(k);
    }
  }
  int index(const Key& k) const {
    auto it = index_.find(k);
    return it == index_.end() ? -1 : it->second;
  }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<Key>& labels() const { return labels_; }

 private:
  std::map<Key, int> index_;
  std::vector<Key> labels_;
};

// (vessel, cell, day) grouping indices for the random effects.
// -1 marks a level unseen when the schema was fitted.
struct GroupKeys {
  std::vector<std::int32_t> mmsi;
  std::vector<std::int32_t> cell;
  std::vector<std::int32_t> day;
  int q_mmsi = 0;
  int q_cell = 0;
  int q_day = 0;
};

// Raw (pre-standardization) covariates in canonical row order, along with
// everything needed to fit or apply a schema. Pure per-record arithmetic;
// delta_cog takes the predecessor within each vessel's time-sorted track
// (first record of a vessel gets 0).
struct RawCovariates {
  Eigen::MatrixXd continuous;  // n x 8, kFeatureNames[0..7] order, unscaled
  std::vector<std::string> vessel_group;
  std::vector<int> status;
  std::vector<std::string> mmsi;
  std::vector<CellId> cell;
  std::vector<std::int64_t> day;
  Eigen::VectorXd sog;
};

// Fitted transform state: standardizer plus the categorical and grouping
// vocabularies, frozen after fitting.
struct FeatureSchema {
  Standardizer standardizer;
  Vocabulary<std::string> vessel_group;
  Vocabulary<int> status;
  Vocabulary<std::string> mmsi;
  Vocabulary<CellId> cell;
  Vocabulary<std::int64_t> day;
  double grid_resolution = 0.5;
};

struct FeatureTable {
  Eigen::MatrixXd X;  // n x 10, kFeatureNames order
  GroupKeys groups;
  Eigen::VectorXd sog;
};

// Sorts records (and their aligned env samples) into canonical order:
// (mmsi, timestamp, lon, lat, sog, cog) lexicographic. Identical inputs in
// any order produce identical canonical tables.
void canonicalize(std::vector<AisRecord>& records, std::vector<EnvSample>& env);

// Records must already be in canonical order.
RawCovariates compute_raw_covariates(const std::vector<AisRecord>& records,
                                     const std::vector<EnvSample>& env,
                                     double grid_resolution);

// Fits standardizer and vocabularies on the given row subset (all rows when
// empty). Throws on constant continuous columns, naming the column.
FeatureSchema fit_schema(const RawCovariates& raw,
                         const std::vector<int>& fit_rows = {},
                         double grid_resolution = 0.5);

// Applies a fitted schema to every row of `raw`.
FeatureTable apply_schema(const RawCovariates& raw, const FeatureSchema& schema);

// Convenience: canonicalize + raw covariates + apply a pre-fitted schema.
FeatureTable build_feature_matrix(std::vector<AisRecord> records,
                                  std::vector<EnvSample> env,
                                  const FeatureSchema& schema);

// Replaces NaNs with the mean of their group's finite values (global mean
// when a group has none). Vessel-attribute gap fill hook.
void mean_impute_by_group(std::vector<double>& values,
                          const std::vector<std::string>& group_labels);

}  // namespace sogmix
