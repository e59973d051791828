#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sogmix/ais_features.hpp"
#include "sogmix/common.hpp"

namespace sogmix {

enum class VariogramKind { spherical, exponential, gaussian };

VariogramKind variogram_kind_from_string(const std::string& s);
std::string to_string(VariogramKind k);

// gamma(h) = nugget + partial_sill * g(h / range), with g the unit-sill
// shape of the chosen kind. `range` is the raw parameter `a` in the model
// formulas, not a practical-range convention.
struct VariogramModel {
  VariogramKind kind = VariogramKind::spherical;
  double nugget = 0;
  double partial_sill = 1;
  double range = 1;

  double operator()(double h) const;
};

struct EmpiricalVariogram {
  std::vector<double> bin_centers;    // km (or planar units)
  std::vector<double> semivariances;  // gamma per bin
  std::vector<std::int64_t> pair_counts;
};

struct PointValue {
  double x = 0;  // lon (or planar x)
  double y = 0;  // lat (or planar y)
  double z = 0;
};

enum class DistanceMetric { euclidean, haversine_km };

double point_distance(double x1, double y1, double x2, double y2,
                      DistanceMetric metric);

// One day of one variable on the working grid; each cell holds the mean of
// its contributing samples.
struct DailyRaster {
  std::int64_t day = 0;
  double resolution = 0.5;
  std::map<CellId, double> cells;

  bool lookup(CellId c, double& out) const;
  std::vector<PointValue> cell_centers() const;
};

struct RasterSample {
  double lon = 0;
  double lat = 0;
  double value = 0;
};

DailyRaster rasterize_daily(std::span<const RasterSample> samples,
                            double resolution, std::int64_t day);

// Inverse-distance-weighted estimate from the n_max nearest known points.
// A zero-distance known point short-circuits to its value.
double idw_fill(std::span<const PointValue> known, double x, double y,
                int n_max = 10, double power = 2.0,
                DistanceMetric metric = DistanceMetric::euclidean);

// Matheron estimator: gamma(h) = sum over pairs in bin of (zi-zj)^2 / (2 N).
// Bins with no pairs are omitted.
EmpiricalVariogram empirical_variogram(std::span<const PointValue> points,
                                       double bin_width, double max_dist,
                                       DistanceMetric metric = DistanceMetric::euclidean);

// Weighted least squares over (nugget, partial_sill, range), weights = pair
// counts. Needs >= 3 nonempty bins.
VariogramModel fit_variogram(const EmpiricalVariogram& emp, VariogramKind kind);

// Ordinary kriging from the n_max nearest neighbors; the weight vector of
// the solved system sums to 1.
double ordinary_krige(std::span<const PointValue> known,
                      const VariogramModel& model, double x, double y,
                      int n_max = 10,
                      DistanceMetric metric = DistanceMetric::euclidean);

// All daily rasters for one variable. A static field (bathymetry,
// distance to coast) carries a single raster matched to every date.
struct RasterSeries {
  std::string variable;
  std::map<std::int64_t, DailyRaster> by_day;
  bool static_field = false;
};

struct CollocationConfig {
  std::map<std::string, VariogramKind> kinds;  // per variable
  int n_max = 10;
  double idw_power = 2.0;
  std::int64_t day_tolerance = 1;  // nearest-day matching window
  DistanceMetric metric = DistanceMetric::haversine_km;
  double resolution = 0.5;
  int variogram_bins = 15;

  static CollocationConfig defaults();
};

// Fills the environmental covariates for every record from the given raster
// series (record order preserved). Per record and variable: nearest-day
// raster cell value when present; otherwise IDW-fill the day's field, fit a
// variogram, and krige at the record position (IDW fallback if the kriging
// system is singular). Missing coverage raises DataError listing the dates.
std::vector<EnvSample> collocate(const std::vector<AisRecord>& records,
                                 const std::vector<RasterSeries>& fields,
                                 const CollocationConfig& config);

}  // namespace sogmix
