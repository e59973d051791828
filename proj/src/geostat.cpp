#include "sogmix/geostat.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "sogmix/csv.hpp"
#include "sogmix/time.hpp"

namespace sogmix {

namespace {

constexpr double kEarthRadiusKm = 6371.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double unit_shape(VariogramKind kind, double u) {
  switch (kind) {
    case VariogramKind::spherical:
      if (u >= 1.0) return 1.0;
      return 1.5 * u - 0.5 * u * u * u;
    case VariogramKind::exponential:
      return 1.0 - std::exp(-u);
    case VariogramKind::gaussian:
      return 1.0 - std::exp(-u * u);
  }
  return 0.0;
}

struct Neighbor {
  double dist;
  std::size_t idx;
};

// n_max nearest points, distance-then-index ordered for determinism.
std::vector<Neighbor> nearest(std::span<const PointValue> known, double x,
                              double y, int n_max, DistanceMetric metric) {
  std::vector<Neighbor> all(known.size());
  for (std::size_t i = 0; i < known.size(); ++i)
    all[i] = {point_distance(known[i].x, known[i].y, x, y, metric), i};
  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.idx < b.idx;
  };
  const std::size_t k = std::min<std::size_t>(n_max, all.size());
  std::partial_sort(all.begin(), all.begin() + k, all.end(), cmp);
  all.resize(k);
  return all;
}

}  // namespace

VariogramKind variogram_kind_from_string(const std::string& s) {
  if (s == "spherical") return VariogramKind::spherical;
  if (s == "exponential") return VariogramKind::exponential;
  if (s == "gaussian") return VariogramKind::gaussian;
  throw ConfigError("unknown variogram kind: '" + s + "'");
}

std::string to_string(VariogramKind k) {
  switch (k) {
    case VariogramKind::spherical: return "spherical";
    case VariogramKind::exponential: return "exponential";
    case VariogramKind::gaussian: return "gaussian";
  }
  return "?";
}

double VariogramModel::operator()(double h) const {
  if (h <= 0) return nugget;
  return nugget + partial_sill * unit_shape(kind, h / range);
}

double point_distance(double x1, double y1, double x2, double y2,
                      DistanceMetric metric) {
  if (metric == DistanceMetric::euclidean)
    return std::hypot(x2 - x1, y2 - y1);
  const double phi1 = y1 * kDegToRad, phi2 = y2 * kDegToRad;
  const double dphi = (y2 - y1) * kDegToRad;
  const double dlam = (x2 - x1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) *
                       std::sin(dlam / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

bool DailyRaster::lookup(CellId c, double& out) const {
  auto it = cells.find(c);
  if (it == cells.end()) return false;
  out = it->second;
  return true;
}

std::vector<PointValue> DailyRaster::cell_centers() const {
  std::vector<PointValue> pts;
  pts.reserve(cells.size());
  for (const auto& [c, v] : cells)
    pts.push_back({cell_lon(c, resolution) + resolution / 2,
                   cell_lat(c, resolution) + resolution / 2, v});
  return pts;
}

DailyRaster rasterize_daily(std::span<const RasterSample> samples,
                            double resolution, std::int64_t day) {
  if (samples.empty()) throw DataError("rasterize_daily: no samples");
  DailyRaster r;
  r.day = day;
  r.resolution = resolution;
  std::map<CellId, std::pair<double, std::int64_t>> acc;
  for (const auto& s : samples) {
    auto& a = acc[grid_cell(s.lon, s.lat, resolution)];
    a.first += s.value;
    a.second += 1;
  }
  for (const auto& [c, a] : acc)
    r.cells[c] = a.first / static_cast<double>(a.second);
  return r;
}

double idw_fill(std::span<const PointValue> known, double x, double y,
                int n_max, double power, DistanceMetric metric) {
  if (known.empty()) throw DataError("idw_fill: empty known set");
  auto nb = nearest(known, x, y, n_max, metric);
  double wsum = 0, zsum = 0;
  for (const auto& n : nb) {
    if (n.dist == 0.0) return known[n.idx].z;
    const double w = std::pow(n.dist, -power);
    wsum += w;
    zsum += w * known[n.idx].z;
  }
  return zsum / wsum;
}

EmpiricalVariogram empirical_variogram(std::span<const PointValue> points,
                                       double bin_width, double max_dist,
                                       DistanceMetric metric) {
  if (points.size() < 2)
    throw DataError("empirical_variogram: need at least 2 points");
  if (bin_width <= 0 || max_dist <= 0)
    throw ConfigError("empirical_variogram: bin_width and max_dist must be > 0");
  const auto n_bins = static_cast<std::size_t>(std::ceil(max_dist / bin_width));
  std::vector<double> sums(n_bins, 0.0);
  std::vector<std::int64_t> counts(n_bins, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double h = point_distance(points[i].x, points[i].y, points[j].x,
                                      points[j].y, metric);
      if (h > max_dist) continue;
      auto b = static_cast<std::size_t>(h / bin_width);
      if (b >= n_bins) b = n_bins - 1;  // h == max_dist edge
      const double d = points[i].z - points[j].z;
      sums[b] += d * d;
      counts[b] += 1;
    }
  }
  EmpiricalVariogram emp;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0) continue;
    emp.bin_centers.push_back((static_cast<double>(b) + 0.5) * bin_width);
    emp.semivariances.push_back(sums[b] / (2.0 * static_cast<double>(counts[b])));
    emp.pair_counts.push_back(counts[b]);
  }
  return emp;
}

namespace {

// For a fixed range, the model is linear in (nugget, partial_sill); solve
// that 2x2 weighted LS with nonnegativity and return the residual.
double wls_at_range(const EmpiricalVariogram& emp, VariogramKind kind,
                    double range, double& nugget, double& sill) {
  double s_w = 0, s_wg = 0, s_wgg = 0, s_wy = 0, s_wgy = 0;
  for (std::size_t i = 0; i < emp.bin_centers.size(); ++i) {
    const double w = static_cast<double>(emp.pair_counts[i]);
    const double g = unit_shape(kind, emp.bin_centers[i] / range);
    const double y = emp.semivariances[i];
    s_w += w;
    s_wg += w * g;
    s_wgg += w * g * g;
    s_wy += w * y;
    s_wgy += w * g * y;
  }
  const double det = s_w * s_wgg - s_wg * s_wg;
  if (std::abs(det) > 1e-30) {
    nugget = (s_wgg * s_wy - s_wg * s_wgy) / det;
    sill = (s_w * s_wgy - s_wg * s_wy) / det;
  } else {
    nugget = -1;  // force the clamped branches below
    sill = -1;
  }
  if (nugget < 0 || sill < 0) {
    // Clamp each to zero in turn, keep the better residual.
    double n1 = 0, c1 = s_wgg > 0 ? std::max(0.0, s_wgy / s_wgg) : 0;
    double n2 = s_w > 0 ? std::max(0.0, s_wy / s_w) : 0, c2 = 0;
    auto resid = [&](double n0, double c0) {
      double r = 0;
      for (std::size_t i = 0; i < emp.bin_centers.size(); ++i) {
        const double g = unit_shape(kind, emp.bin_centers[i] / range);
        const double e = n0 + c0 * g - emp.semivariances[i];
        r += static_cast<double>(emp.pair_counts[i]) * e * e;
      }
      return r;
    };
    const double r1 = resid(n1, c1), r2 = resid(n2, c2);
    if (r1 <= r2) {
      nugget = n1;
      sill = c1;
      return r1;
    }
    nugget = n2;
    sill = c2;
    return r2;
  }
  double r = 0;
  for (std::size_t i = 0; i < emp.bin_centers.size(); ++i) {
    const double g = unit_shape(kind, emp.bin_centers[i] / range);
    const double e = nugget + sill * g - emp.semivariances[i];
    r += static_cast<double>(emp.pair_counts[i]) * e * e;
  }
  return r;
}

}  // namespace

VariogramModel fit_variogram(const EmpiricalVariogram& emp, VariogramKind kind) {
  if (emp.bin_centers.size() < 3)
    throw DataError("fit_variogram: need at least 3 nonempty bins");
  const double h_max = emp.bin_centers.back();
  const double lo = h_max * 1e-3, hi = h_max * 3.0;

  // Coarse grid over the range parameter, then golden-section refinement.
  double best_r = std::numeric_limits<double>::infinity();
  double best_a = lo, best_n = 0, best_c = 0;
  const int grid = 200;
  for (int i = 0; i <= grid; ++i) {
    const double a = lo + (hi - lo) * i / grid;
    double n0, c0;
    const double r = wls_at_range(emp, kind, a, n0, c0);
    if (r < best_r) {
      best_r = r;
      best_a = a;
      best_n = n0;
      best_c = c0;
    }
  }
  const double step = (hi - lo) / grid;
  double a_lo = std::max(lo, best_a - step), a_hi = std::min(hi, best_a + step);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = a_hi - phi * (a_hi - a_lo), x2 = a_lo + phi * (a_hi - a_lo);
  double n1, c1, n2, c2;
  double f1 = wls_at_range(emp, kind, x1, n1, c1);
  double f2 = wls_at_range(emp, kind, x2, n2, c2);
  for (int it = 0; it < 120 && (a_hi - a_lo) > 1e-12 * h_max; ++it) {
    if (f1 <= f2) {
      a_hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = a_hi - phi * (a_hi - a_lo);
      f1 = wls_at_range(emp, kind, x1, n1, c1);
    } else {
      a_lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = a_lo + phi * (a_hi - a_lo);
      f2 = wls_at_range(emp, kind, x2, n2, c2);
    }
  }
  double a = (a_lo + a_hi) / 2;
  double n0, c0;
  double r = wls_at_range(emp, kind, a, n0, c0);
  if (r > best_r) {
    a = best_a;
    n0 = best_n;
    c0 = best_c;
    r = best_r;
  }
  if (!std::isfinite(r))
    throw NumericError("fit_variogram: degenerate fit, residual " +
                       std::to_string(r));
  VariogramModel m;
  m.kind = kind;
  m.nugget = std::max(0.0, n0);
  m.partial_sill = std::max(0.0, c0);
  m.range = a;
  return m;
}

double ordinary_krige(std::span<const PointValue> known,
                      const VariogramModel& model, double x, double y,
                      int n_max, DistanceMetric metric) {
  if (known.empty()) throw DataError("ordinary_krige: empty known set");
  if (!(model.range > 0) || model.nugget < 0 || model.partial_sill < 0)
    throw ConfigError("ordinary_krige: invalid variogram model");
  auto nb = nearest(known, x, y, n_max, metric);
  const int m = static_cast<int>(nb.size());
  Eigen::MatrixXd A(m + 1, m + 1);
  Eigen::VectorXd rhs(m + 1);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const auto& pi = known[nb[i].idx];
      const auto& pj = known[nb[j].idx];
      A(i, j) = model(point_distance(pi.x, pi.y, pj.x, pj.y, metric));
    }
    A(i, m) = 1.0;
    A(m, i) = 1.0;
    rhs(i) = model(nb[i].dist);
  }
  A(m, m) = 0.0;
  rhs(m) = 1.0;

  auto solve = [&](const Eigen::MatrixXd& mat) -> std::pair<bool, Eigen::VectorXd> {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(mat);
    if (!lu.isInvertible()) return {false, {}};
    Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite()) return {false, {}};
    return {true, sol};
  };

  auto [ok, sol] = solve(A);
  if (!ok) {
    double diag_mean = A.topLeftCorner(m, m).diagonal().mean();
    if (diag_mean <= 0) diag_mean = A.topLeftCorner(m, m).cwiseAbs().mean();
    Eigen::MatrixXd jittered = A;
    jittered.topLeftCorner(m, m).diagonal().array() += 1e-10 * diag_mean;
    std::tie(ok, sol) = solve(jittered);
    if (!ok) throw NumericError("ordinary_krige: singular kriging system");
  }
  double pred = 0, wsum = 0;
  for (int i = 0; i < m; ++i) {
    pred += sol(i) * known[nb[i].idx].z;
    wsum += sol(i);
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw NumericError("ordinary_krige: weights sum to " + std::to_string(wsum));
  return pred;
}

CollocationConfig CollocationConfig::defaults() {
  CollocationConfig c;
  c.kinds = {{"icec", VariogramKind::spherical},
             {"u10", VariogramKind::exponential},
             {"v10", VariogramKind::gaussian},
             {"bathy", VariogramKind::gaussian},
             {"dist_to_coast", VariogramKind::gaussian}};
  return c;
}

namespace {

// Fill every grid cell of the study window that has records but no data,
// using IDW from the populated cells. Returns cell-center points of the
// completed field.
std::vector<PointValue> filled_field(const DailyRaster& raster,
                                     const std::set<CellId>& wanted,
                                     const CollocationConfig& cfg) {
  std::vector<PointValue> pts = raster.cell_centers();
  std::vector<PointValue> base = pts;
  for (CellId c : wanted) {
    if (raster.cells.count(c)) continue;
    const double cx = cell_lon(c, raster.resolution) + raster.resolution / 2;
    const double cy = cell_lat(c, raster.resolution) + raster.resolution / 2;
    pts.push_back({cx, cy, idw_fill(base, cx, cy, cfg.n_max, cfg.idw_power,
                                    cfg.metric)});
  }
  return pts;
}

double field_extent(const std::vector<PointValue>& pts, DistanceMetric metric) {
  double lo_x = pts[0].x, hi_x = pts[0].x, lo_y = pts[0].y, hi_y = pts[0].y;
  for (const auto& p : pts) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  return point_distance(lo_x, lo_y, hi_x, hi_y, metric);
}

}  // namespace

std::vector<EnvSample> collocate(const std::vector<AisRecord>& records,
                                 const std::vector<RasterSeries>& fields,
                                 const CollocationConfig& config) {
  std::vector<EnvSample> out(records.size());
  std::set<std::string> missing_dates;

  for (const auto& series : fields) {
    if (series.by_day.empty())
      throw DataError("collocate: no rasters for variable '" + series.variable + "'");
    auto kind_it = config.kinds.find(series.variable);
    const VariogramKind kind = kind_it != config.kinds.end()
                                   ? kind_it->second
                                   : VariogramKind::spherical;

    // Records grouped by matched raster day so each day's field is filled
    // and fitted once.
    std::map<std::int64_t, std::vector<std::size_t>> by_day;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const std::int64_t day = assign_time_id(records[i].epoch_seconds);
      std::int64_t matched;
      if (series.static_field) {
        matched = series.by_day.begin()->first;
      } else {
        // Nearest raster day within tolerance; ties pick the earlier day.
        auto ge = series.by_day.lower_bound(day);
        std::int64_t best = -1, best_gap = config.day_tolerance + 1;
        if (ge != series.by_day.begin()) {
          auto lt = std::prev(ge);
          best = lt->first;
          best_gap = day - lt->first;
        }
        if (ge != series.by_day.end() && ge->first - day < best_gap) {
          best = ge->first;
          best_gap = ge->first - day;
        }
        if (best_gap > config.day_tolerance) {
          missing_dates.insert(format_date(day));
          continue;
        }
        matched = best;
      }
      by_day[matched].push_back(i);
    }

    if (!missing_dates.empty()) break;

    auto assign = [&](std::size_t i, double v) {
      if (series.variable == "icec") out[i].icec = std::clamp(v, 0.0, 1.0);
      else if (series.variable == "u10") out[i].u10 = v;
      else if (series.variable == "v10") out[i].v10 = v;
      else if (series.variable == "bathy") out[i].bathy = v;
      else if (series.variable == "dist_to_coast") out[i].dist_to_coast = std::max(0.0, v);
      else throw ConfigError("collocate: unknown variable '" + series.variable + "'");
    };

    for (const auto& [day, rows] : by_day) {
      const DailyRaster& raster = series.by_day.at(day);
      // First pass: direct cell extraction.
      std::vector<std::size_t> gaps;
      std::set<CellId> wanted;
      for (std::size_t i : rows) {
        const CellId c =
            grid_cell(records[i].lon, records[i].lat, raster.resolution);
        wanted.insert(c);
        double v;
        if (raster.lookup(c, v))
          assign(i, v);
        else
          gaps.push_back(i);
      }
      if (gaps.empty()) continue;

      // Geostatistical path: IDW-complete the field, fit, krige.
      std::vector<PointValue> field = filled_field(raster, wanted, config);
      VariogramModel model;
      bool have_model = false;
      if (field.size() >= 4) {
        const double diameter = field_extent(field, config.metric);
        const double max_dist = diameter / 2;
        if (max_dist > 0) {
          try {
            auto emp = empirical_variogram(
                field, max_dist / config.variogram_bins, max_dist, config.metric);
            model = fit_variogram(emp, kind);
            have_model = true;
          } catch (const std::exception&) {
            have_model = false;  // flat or degenerate field: IDW fallback
          }
        }
      }
      for (std::size_t i : gaps) {
        double v;
        if (have_model) {
          try {
            v = ordinary_krige(field, model, records[i].lon, records[i].lat,
                               config.n_max, config.metric);
          } catch (const NumericError&) {
            v = idw_fill(field, records[i].lon, records[i].lat, config.n_max,
                         config.idw_power, config.metric);
          }
        } else {
          v = idw_fill(field, records[i].lon, records[i].lat, config.n_max,
                       config.idw_power, config.metric);
        }
        assign(i, v);
      }
    }
  }

  if (!missing_dates.empty()) {
    std::string msg = "collocate: no raster within tolerance for dates:";
    for (const auto& d : missing_dates) msg += " " + d;
    throw DataError(msg);
  }
  return out;
}

}  // namespace sogmix
