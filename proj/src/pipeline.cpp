#include "sogmix/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "sogmix/csv.hpp"
#include "sogmix/metrics.hpp"
#include "sogmix/model_io.hpp"
#include "sogmix/normal.hpp"
#include "sogmix/rng.hpp"
#include "sogmix/shap.hpp"
#include "sogmix/time.hpp"

namespace sogmix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCoreVersion = "0.1.0";

std::string fmt(double v) { return CsvWriter::fmt(v); }

// Removes everything written so far if the command throws.
class OutputGuard {
 public:
  explicit OutputGuard(const std::string& out_dir) : out_dir_(out_dir) {
    fs::create_directories(out_dir);
  }
  ~OutputGuard() {
    if (!committed_) {
      for (const auto& p : files_) {
        std::error_code ec;
        fs::remove(p, ec);
      }
    }
  }
  std::string path(const std::string& name) {
    const std::string p = (fs::path(out_dir_) / name).string();
    files_.push_back(p);
    return p;
  }
  std::vector<std::string> commit() {
    committed_ = true;
    return files_;
  }

 private:
  std::string out_dir_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct ManifestWriter {
  std::string command;
  const PipelineConfig* cfg = nullptr;
  std::vector<std::string> inputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write(OutputGuard& guard, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["config_hash"] = config_hash(*cfg);
    m["seed"] = cfg->seed;
    m["module_versions"] = {{"sogmix_core", kCoreVersion},
                            {"model_schema", 1},
                            {"csv_schema", 1}};
    json in = json::array();
    for (const auto& p : inputs)
      in.push_back({{"path", p}, {"fnv1a64", hex64(file_digest(p))}});
    m["inputs"] = std::move(in);
    json out_list = json::array();
    for (const auto& p : outputs) out_list.push_back(p);
    m["outputs"] = std::move(out_list);
    m["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
    const std::string final_path = guard.path("manifest.json");
    const std::string tmp = final_path + ".tmp";
    {
      std::ofstream o(tmp);
      o << m.dump(1) << "\n";
    }
    fs::rename(tmp, final_path);  // atomic publish
  }
};

const std::vector<std::string> kDataHeader = {
    "mmsi", "timestamp", "lon",  "lat", "sog",   "cog",          "vessel_group",
    "nav_status", "icec", "u10", "v10", "bathy", "dist_to_coast"};

void write_data_csv(const std::string& path, const std::vector<AisRecord>& records,
                    const std::vector<EnvSample>* env) {
  std::vector<std::string> header(kDataHeader.begin(),
                                  kDataHeader.begin() + (env ? 13 : 8));
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AisRecord& r = records[i];
    std::vector<std::string> row = {r.mmsi,
                                    format_timestamp(r.epoch_seconds),
                                    fmt(r.lon),
                                    fmt(r.lat),
                                    fmt(r.sog),
                                    fmt(r.cog),
                                    r.vessel_group,
                                    std::to_string(r.nav_status)};
    if (env) {
      const EnvSample& e = (*env)[i];
      row.insert(row.end(), {fmt(e.icec), fmt(e.u10), fmt(e.v10), fmt(e.bathy),
                             fmt(e.dist_to_coast)});
    }
    w.write_row(row);
  }
}

FeatureTable features_from_schema(const DataTable& data, const FeatureSchema& schema) {
  RawCovariates raw =
      compute_raw_covariates(data.records, data.env, schema.grid_resolution);
  return apply_schema(raw, schema);
}

}  // namespace

DataTable read_data_csv(const std::string& path) {
  const CsvTable t = CsvTable::read_file(path);
  DataTable d;
  const int c_mmsi = t.column("mmsi"), c_ts = t.column("timestamp");
  const int c_lon = t.column("lon"), c_lat = t.column("lat");
  const int c_sog = t.column("sog"), c_cog = t.column("cog");
  const int c_grp = t.column("vessel_group"), c_st = t.column("nav_status");
  d.has_env = t.has_column("icec") && t.has_column("u10") &&
              t.has_column("v10") && t.has_column("bathy") &&
              t.has_column("dist_to_coast");
  d.records.reserve(t.rows());
  d.env.assign(t.rows(), EnvSample{});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    AisRecord r;
    r.mmsi = t.cell(i, c_mmsi);
    r.epoch_seconds = parse_timestamp(t.cell(i, c_ts));
    r.lon = t.number(i, c_lon);
    r.lat = t.number(i, c_lat);
    r.sog = t.number(i, c_sog);
    r.cog = t.number(i, c_cog);
    if (r.cog >= 360.0) r.cog = std::fmod(r.cog, 360.0);
    if (r.cog < 0)
      throw DataError(path + ":" + std::to_string(t.line_of(i)) +
                      ": negative cog");
    if (r.sog < 0)
      throw DataError(path + ":" + std::to_string(t.line_of(i)) +
                      ": negative sog");
    r.vessel_group = t.cell(i, c_grp);
    r.nav_status = static_cast<int>(t.integer(i, c_st));
    if (r.nav_status < 0 || r.nav_status > 15)
      throw DataError(path + ":" + std::to_string(t.line_of(i)) +
                      ": nav_status outside 0-15");
    d.records.push_back(std::move(r));
    if (d.has_env) {
      EnvSample& e = d.env[i];
      e.icec = t.number(i, t.column("icec"));
      e.u10 = t.number(i, t.column("u10"));
      e.v10 = t.number(i, t.column("v10"));
      e.bathy = t.number(i, t.column("bathy"));
      e.dist_to_coast = t.number(i, t.column("dist_to_coast"));
    }
  }
  return d;
}

std::string config_hash(const PipelineConfig& cfg) {
  // Canonical key=value dump of every field that affects results.
  json j;
  j["window"] = {cfg.lon_min, cfg.lon_max, cfg.lat_min, cfg.lat_max};
  j["months"] = {cfg.month_start, cfg.month_end};
  j["resolution"] = cfg.resolution;
  j["folds"] = cfg.folds;
  j["seed"] = cfg.seed;
  auto train_json = [](const TrainConfig& t) {
    return json{{"rounds", t.n_rounds},
                {"lr", t.learning_rate},
                {"depth", t.tree.max_depth},
                {"min_leaf", t.tree.min_samples_leaf},
                {"bins", t.tree.max_bins},
                {"subsample", t.tree.feature_subsample},
                {"cadence", t.variance_cadence}};
  };
  j["classifier"] = train_json(cfg.classifier);
  j["regressor"] = train_json(cfg.regressor);
  j["smearing"] = cfg.smearing;
  j["synth"] = {cfg.synth.n,          cfg.synth.q_mmsi,
                cfg.synth.q_cell,     cfg.synth.q_time,
                cfg.synth.var_mmsi,   cfg.synth.var_cell,
                cfg.synth.var_time,   cfg.synth.resid_var,
                cfg.synth.prevalence, cfg.synth.reg_mean_level};
  j["synth_means"] = {cfg.synth.clf_mean, cfg.synth.reg_mean};
  j["explain"] = {cfg.explain_sample, cfg.explain_bins};
  j["calibration_bins"] = cfg.calibration_bins;
  return hex64(fnv1a64(j.dump()));
}

void write_error_record(const std::string& out_dir, const std::string& command,
                        int exit_code, const std::string& message) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream o(fs::path(out_dir) / "error.json");
  o << json{{"command", command}, {"exit_code", exit_code}, {"error", message}}
           .dump(1)
    << "\n";
}

std::vector<std::string> run_simulate(const PipelineConfig& cfg) {
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"simulate", &cfg};
  SynthConfig scfg = cfg.synth;
  scfg.seed = cfg.seed;
  const SynthData data = generate(scfg);
  write_data_csv(guard.path("data.csv"), data.records, &data.env);
  {
    CsvWriter w(guard.path("truth.csv"),
                {"row_id", "clf_latent", "reg_latent", "bayes_prob",
                 "gaussian_response"});
    for (Eigen::Index i = 0; i < data.truth.clf_latent.size(); ++i)
      w.write_row({std::to_string(i), fmt(data.truth.clf_latent[i]),
                   fmt(data.truth.reg_latent[i]), fmt(data.truth.bayes_prob[i]),
                   fmt(data.truth.gaussian_response[i])});
  }
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_ingest(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("ingest: --input is required");
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"ingest", &cfg};
  manifest.inputs.push_back(cfg.input);

  DataTable data = read_data_csv(cfg.input);
  std::vector<AisRecord> kept;
  std::vector<EnvSample> kept_env;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const AisRecord& r = data.records[i];
    if (r.lon < cfg.lon_min || r.lon > cfg.lon_max || r.lat < cfg.lat_min ||
        r.lat > cfg.lat_max)
      continue;
    const int m = month_of(epoch_day_of(r.epoch_seconds));
    if (m < cfg.month_start || m > cfg.month_end) continue;
    kept.push_back(r);
    kept_env.push_back(data.env[i]);
  }
  if (kept.empty())
    throw DataError("ingest: no records inside the study window and season");
  canonicalize(kept, kept_env);
  write_data_csv(guard.path("filtered.csv"), kept,
                 data.has_env ? &kept_env : nullptr);

  // Composition tables: counts and within-class percentages, split on
  // zero vs positive SOG.
  auto composition = [&](auto key_of, const std::string& path,
                         const std::string& key_name) {
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> acc;  // pos, zero
    std::int64_t n_pos = 0, n_zero = 0;
    for (const auto& r : kept) {
      auto& a = acc[key_of(r)];
      if (r.sog > 0) {
        a.first += 1;
        ++n_pos;
      } else {
        a.second += 1;
        ++n_zero;
      }
    }
    CsvWriter w(path, {key_name, "positive_count", "positive_pct", "zero_count",
                       "zero_pct"});
    for (const auto& [key, a] : acc) {
      const double ppct = n_pos > 0 ? 100.0 * static_cast<double>(a.first) /
                                          static_cast<double>(n_pos)
                                    : 0.0;
      const double zpct = n_zero > 0 ? 100.0 * static_cast<double>(a.second) /
                                           static_cast<double>(n_zero)
                                     : 0.0;
      w.write_row({key, std::to_string(a.first), fmt(ppct),
                   std::to_string(a.second), fmt(zpct)});
    }
  };
  composition([](const AisRecord& r) { return r.vessel_group; },
              guard.path("composition_vessel_group.csv"), "vessel_group");
  composition([](const AisRecord& r) { return std::to_string(r.nav_status); },
              guard.path("composition_status.csv"), "nav_status");

  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_collocate(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("collocate: --input is required");
  if (cfg.raster_dir.empty())
    throw ConfigError("collocate: --raster-dir is required");
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"collocate", &cfg};
  manifest.inputs.push_back(cfg.input);

  DataTable data = read_data_csv(cfg.input);
  if (data.records.empty()) throw DataError("collocate: no input records");

  static const std::vector<std::string> kVars = {"icec", "u10", "v10", "bathy",
                                                 "dist_to_coast"};
  static const std::vector<std::string> kStaticVars = {"bathy", "dist_to_coast"};
  std::vector<RasterSeries> fields;
  for (const auto& var : kVars) {
    const fs::path p = fs::path(cfg.raster_dir) / (var + ".csv");
    if (!fs::exists(p))
      throw DataError("collocate: missing raster file " + p.string());
    manifest.inputs.push_back(p.string());
    const CsvTable t = CsvTable::read_file(p.string());
    const int c_date = t.column("date"), c_lon = t.column("lon_cell");
    const int c_lat = t.column("lat_cell"), c_val = t.column("value");
    std::map<std::int64_t, std::vector<RasterSample>> by_day;
    for (std::size_t i = 0; i < t.rows(); ++i)
      by_day[parse_date(t.cell(i, c_date))].push_back(
          {t.number(i, c_lon), t.number(i, c_lat), t.number(i, c_val)});
    RasterSeries series;
    series.variable = var;
    series.static_field =
        std::find(kStaticVars.begin(), kStaticVars.end(), var) != kStaticVars.end();
    for (const auto& [day, samples] : by_day)
      series.by_day[day] = rasterize_daily(samples, cfg.resolution, day);
    fields.push_back(std::move(series));
  }
  CollocationConfig ccfg = cfg.colloc;
  ccfg.resolution = cfg.resolution;
  const std::vector<EnvSample> env = collocate(data.records, fields, ccfg);
  write_data_csv(guard.path("collocated.csv"), data.records, &env);
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

namespace {

struct PreparedData {
  DataTable data;
  FeatureSchema schema;
  FeatureTable table;
  GroupTable groups;
};

PreparedData prepare_features(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("--input is required");
  PreparedData p;
  p.data = read_data_csv(cfg.input);
  if (!p.data.has_env)
    throw DataError(
        "training needs environmental columns; run collocate first");
  if (p.data.records.size() < 2) throw DataError("not enough rows to train on");
  canonicalize(p.data.records, p.data.env);
  RawCovariates raw =
      compute_raw_covariates(p.data.records, p.data.env, cfg.resolution);
  p.schema = fit_schema(raw, {}, cfg.resolution);
  p.table = apply_schema(raw, p.schema);
  p.groups = GroupTable::from_keys(p.table.groups);
  return p;
}

void write_oof_csv(const std::string& path, const OofTable& oof) {
  CsvWriter w(path, {"row_id", "fold", "stage", "latent", "response"});
  const auto n = oof.classifier_latent.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(oof.classifier_latent[i]))
      w.write_row({std::to_string(i), std::to_string(oof.fold_of_row[i]),
                   "classifier", fmt(oof.classifier_latent[i]),
                   fmt(normal_cdf(oof.classifier_latent[i]))});
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(oof.regressor_latent[i]))
      w.write_row({std::to_string(i), std::to_string(oof.fold_of_row[i]),
                   "regressor", fmt(oof.regressor_latent[i]),
                   fmt(back_transform(oof.regressor_latent[i]))});
  }
}

TrainConfig seeded(TrainConfig t, std::uint64_t seed, std::uint64_t salt) {
  t.seed = splitmix64(seed ^ salt);
  t.tree.seed = t.seed;
  return t;
}

}  // namespace

std::vector<std::string> run_train_two_stage(const PipelineConfig& cfg) {
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"train-two-stage", &cfg};
  manifest.inputs.push_back(cfg.input);
  PreparedData p = prepare_features(cfg);

  std::vector<int> labels(p.data.records.size());
  for (std::size_t i = 0; i < p.data.records.size(); ++i)
    labels[i] = derive_binary_label(p.table.sog[static_cast<Eigen::Index>(i)]);
  const FoldPlan plan = make_fold_plan(labels, cfg.folds, splitmix64(cfg.seed));

  TwoStageConfig tcfg;
  tcfg.classifier = seeded(cfg.classifier, cfg.seed, 0xc1a55ULL);
  tcfg.regressor = seeded(cfg.regressor, cfg.seed, 0x4e64ULL);
  tcfg.smearing = cfg.smearing;
  const TwoStageResult res =
      train_two_stage(p.table.X, p.groups, p.table.sog, plan, tcfg);

  ModelBundle bundle;
  bundle.schema = p.schema;
  bundle.classifier = res.model.classifier;
  bundle.regressor = res.model.regressor;
  bundle.smearing = res.model.smearing;
  bundle.smear_sq_resid = res.model.smear_sq_resid;
  bundle.seed = cfg.seed;
  bundle.config_hash = config_hash(cfg);
  save_bundle(guard.path("model.json"), bundle);
  write_oof_csv(guard.path("oof.csv"), res.oof);

  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_train_classifier(const PipelineConfig& cfg) {
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"train-classifier", &cfg};
  manifest.inputs.push_back(cfg.input);
  PreparedData p = prepare_features(cfg);
  std::vector<int> labels(p.data.records.size());
  for (std::size_t i = 0; i < p.data.records.size(); ++i)
    labels[i] = derive_binary_label(p.table.sog[static_cast<Eigen::Index>(i)]);
  const FoldPlan plan = make_fold_plan(labels, cfg.folds, splitmix64(cfg.seed));
  const auto res = classifier_cv(p.table.X, p.groups, labels, plan,
                                 seeded(cfg.classifier, cfg.seed, 0xc1a55ULL));
  ModelBundle bundle;
  bundle.schema = p.schema;
  bundle.classifier = res.model;
  bundle.seed = cfg.seed;
  bundle.config_hash = config_hash(cfg);
  save_bundle(guard.path("model.json"), bundle);
  OofTable oof;
  oof.fold_of_row = plan.fold_of_row;
  oof.classifier_latent = res.oof_latent;
  oof.regressor_latent = Eigen::VectorXd::Constant(
      res.oof_latent.size(), std::numeric_limits<double>::quiet_NaN());
  write_oof_csv(guard.path("oof.csv"), oof);
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_train_regressor(const PipelineConfig& cfg) {
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"train-regressor", &cfg};
  manifest.inputs.push_back(cfg.input);
  PreparedData p = prepare_features(cfg);
  const auto n = p.table.X.rows();
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<char> positive(static_cast<std::size_t>(n));
  Eigen::VectorXd y_sqrt = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels[i] = derive_binary_label(p.table.sog[i]);
    positive[i] = labels[i] == 1;
    if (positive[i]) y_sqrt[i] = sqrt_transform(p.table.sog[i]);
  }
  const FoldPlan plan = make_fold_plan(labels, cfg.folds, splitmix64(cfg.seed));
  const auto res = regressor_cv(p.table.X, p.groups, y_sqrt, positive, plan,
                                seeded(cfg.regressor, cfg.seed, 0x4e64ULL));
  ModelBundle bundle;
  bundle.schema = p.schema;
  bundle.regressor = res.model;
  bundle.smearing = cfg.smearing;
  bundle.smear_sq_resid = res.smear_sq_resid;
  bundle.seed = cfg.seed;
  bundle.config_hash = config_hash(cfg);
  save_bundle(guard.path("model.json"), bundle);
  OofTable oof;
  oof.fold_of_row = plan.fold_of_row;
  oof.classifier_latent = Eigen::VectorXd::Constant(
      n, std::numeric_limits<double>::quiet_NaN());
  oof.regressor_latent = res.oof_latent;
  write_oof_csv(guard.path("oof.csv"), oof);
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_evaluate(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("evaluate: --input is required");
  if (cfg.oof.empty()) throw ConfigError("evaluate: --oof is required");
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"evaluate", &cfg};
  manifest.inputs = {cfg.input, cfg.oof};

  DataTable data = read_data_csv(cfg.input);
  canonicalize(data.records, data.env);
  const auto n = data.records.size();

  const CsvTable t = CsvTable::read_file(cfg.oof);
  const int c_row = t.column("row_id"), c_stage = t.column("stage");
  const int c_latent = t.column("latent");
  std::vector<double> clf_latent(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> reg_latent(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto row = static_cast<std::size_t>(t.integer(i, c_row));
    if (row >= n)
      throw DataError("evaluate: oof row_id out of range of the data file");
    if (t.cell(i, c_stage) == "classifier")
      clf_latent[row] = t.number(i, c_latent);
    else if (t.cell(i, c_stage) == "regressor")
      reg_latent[row] = t.number(i, c_latent);
  }

  json report;
  report["metadata"] = {{"pr_interpolation", "step"},
                        {"calibration_bins", cfg.calibration_bins},
                        {"probability_threshold", 0.5},
                        {"config_hash", config_hash(cfg)}};

  auto put = [](json& dst, const char* key, const std::optional<double>& v) {
    if (v)
      dst[key] = *v;
    else
      dst[key] = nullptr;  // undefined (zero denominator)
  };

  // Classifier block.
  {
    std::vector<double> probs;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(clf_latent[i])) continue;
      probs.push_back(normal_cdf(clf_latent[i]));
      labels.push_back(derive_binary_label(data.records[i].sog));
    }
    if (!probs.empty()) {
      const auto counts = confusion_counts(probs, labels, 0.5);
      ClassificationReport rep = confusion_metrics(counts);
      rep.auc = roc_auc(probs, labels);
      rep.pr_auc = pr_auc(probs, labels);
      json c;
      put(c, "accuracy", rep.accuracy);
      put(c, "balanced_accuracy", rep.balanced_accuracy);
      put(c, "sensitivity", rep.sensitivity);
      put(c, "specificity", rep.specificity);
      put(c, "precision", rep.precision);
      put(c, "npv", rep.npv);
      put(c, "kappa", rep.kappa);
      put(c, "prevalence", rep.prevalence);
      put(c, "detection_rate", rep.detection_rate);
      put(c, "detection_prevalence", rep.detection_prevalence);
      put(c, "auc", rep.auc);
      put(c, "pr_auc", rep.pr_auc);
      c["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp},
                        {"fn", counts.fn}, {"tn", counts.tn}};
      report["classification"] = std::move(c);

      const auto roc = roc_curve(probs, labels);
      CsvWriter w1(guard.path("roc.csv"), {"fpr", "tpr", "threshold"});
      for (const auto& ptt : roc)
        w1.write_row({fmt(ptt.x), fmt(ptt.y), fmt(ptt.threshold)});
      const auto pr = pr_curve(probs, labels);
      CsvWriter w2(guard.path("pr.csv"), {"recall", "precision", "threshold"});
      for (const auto& ptt : pr)
        w2.write_row({fmt(ptt.x), fmt(ptt.y), fmt(ptt.threshold)});
    }
  }

  // Regressor block (positive-SOG rows with OOF predictions).
  {
    std::vector<double> pred_sqrt, obs_sqrt;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(reg_latent[i])) continue;
      if (!(data.records[i].sog > 0)) continue;
      pred_sqrt.push_back(reg_latent[i]);
      obs_sqrt.push_back(sqrt_transform(data.records[i].sog));
    }
    if (!pred_sqrt.empty()) {
      const auto rep = regression_metrics(pred_sqrt, obs_sqrt);
      json r;
      json sq, orig;
      put(sq, "r2", rep.r2_transformed);
      sq["mae"] = rep.mae_transformed;
      sq["rmse"] = rep.rmse_transformed;
      put(orig, "r2", rep.r2_original);
      orig["mae"] = rep.mae_original;
      orig["rmse"] = rep.rmse_original;
      r["sqrt_scale"] = std::move(sq);
      r["original_scale"] = std::move(orig);
      report["regression"] = std::move(r);

      // Calibration on the original SOG scale, equal-frequency bins.
      std::vector<double> pred_knots(pred_sqrt.size()), obs_knots(obs_sqrt.size());
      for (std::size_t i = 0; i < pred_sqrt.size(); ++i) {
        pred_knots[i] = back_transform(pred_sqrt[i]);
        obs_knots[i] = back_transform(obs_sqrt[i]);
      }
      const int bins =
          std::min<int>(cfg.calibration_bins, static_cast<int>(pred_knots.size()));
      const auto cal = calibration_bins(pred_knots, obs_knots, bins);
      CsvWriter w(guard.path("calibration.csv"),
                  {"mean_predicted", "mean_observed", "count"});
      for (const auto& b : cal.bins)
        w.write_row({fmt(b.mean_predicted), fmt(b.mean_observed),
                     std::to_string(b.count)});
    }
  }

  // Optional stratified diagnostics on the regression stage.
  if (!cfg.strata_feature.empty()) {
    std::vector<double> obs, pred, cov;
    std::vector<std::string> strata;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(reg_latent[i]) || !(data.records[i].sog > 0)) continue;
      obs.push_back(data.records[i].sog);
      pred.push_back(back_transform(reg_latent[i]));
      cov.push_back(data.env[i].dist_to_coast);
      if (cfg.strata_feature == "vessel_group")
        strata.push_back(data.records[i].vessel_group);
      else
        strata.push_back(std::to_string(data.records[i].nav_status));
    }
    if (!obs.empty()) {
      const auto diag = stratified_diagnostic(obs, pred, cov, strata,
                                              {BinSpec::Kind::quantile, 10});
      CsvWriter w(guard.path("stratified.csv"),
                  {"stratum", "bin_center", "mean_observed", "mean_predicted",
                   "count"});
      for (const auto& d : diag)
        w.write_row({d.stratum, fmt(d.bin_center), fmt(d.mean_observed),
                     fmt(d.mean_predicted), std::to_string(d.count)});
      const auto resid = residual_by_group(obs, pred, strata);
      CsvWriter w2(guard.path("residuals_by_group.csv"),
                   {"group", "mean_residual", "count"});
      for (const auto& g : resid)
        w2.write_row({g.group, fmt(g.mean_residual), std::to_string(g.count)});
    }
  }

  {
    std::ofstream o(guard.path("report.json"));
    o << report.dump(1) << "\n";
  }
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_explain(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("explain: --input is required");
  if (cfg.model.empty()) throw ConfigError("explain: --model is required");
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"explain", &cfg};
  manifest.inputs = {cfg.input, cfg.model};

  const ModelBundle bundle = load_bundle(cfg.model);
  DataTable data = read_data_csv(cfg.input);
  canonicalize(data.records, data.env);
  const FeatureTable table = features_from_schema(data, bundle.schema);
  const auto n = table.X.rows();

  auto explain_stage = [&](const MixedBoostModel& model, const std::string& stage,
                           const std::vector<int>& rows) {
    Eigen::MatrixXd sample(static_cast<Eigen::Index>(rows.size()), kNumFeatures);
    for (std::size_t i = 0; i < rows.size(); ++i)
      sample.row(static_cast<Eigen::Index>(i)) = table.X.row(rows[i]);
    const ShapMatrix shap = shap_ensemble(model, sample);

    std::vector<std::string> header = {"row_id"};
    for (const char* name : kFeatureNames) header.push_back(std::string("phi_") + name);
    header.push_back("base");
    CsvWriter w(guard.path("shap_" + stage + ".csv"), header);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<std::string> row = {std::to_string(rows[i])};
      for (int j = 0; j < kNumFeatures; ++j)
        row.push_back(fmt(shap.phi(static_cast<Eigen::Index>(i), j)));
      row.push_back(fmt(shap.base_value));
      w.write_row(row);
    }

    const auto importance = global_importance(shap);
    CsvWriter wi(guard.path("importance_" + stage + ".csv"),
                 {"feature", "mean_abs_shap"});
    for (const auto& fi : importance)
      wi.write_row({kFeatureNames[fi.feature], fmt(fi.mean_abs_shap)});

    // Raw-unit covariates for the binned marginals.
    const Eigen::MatrixXd raw_cont =
        bundle.schema.standardizer.inverse(sample.leftCols(kNumContinuous));
    for (int f = 0; f < kNumContinuous; ++f) {
      std::vector<double> cov(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        cov[i] = raw_cont(static_cast<Eigen::Index>(i), f);
      const auto binned =
          binned_marginal(shap, f, cov, ShapBinKind::quantile, cfg.explain_bins);
      CsvWriter wb(guard.path("binned_" + stage + "_" +
                              std::string(kFeatureNames[f]) + ".csv"),
                   {"bin_lo", "bin_hi", "bin_center", "mean_shap", "count"});
      for (const auto& b : binned.bins)
        wb.write_row({fmt(b.lo), fmt(b.hi), fmt(b.center), fmt(b.mean_shap),
                      std::to_string(b.count)});
    }

    auto categorical = [&](int feature, const std::string& name,
                           auto label_of) {
      std::vector<std::string> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = label_of(rows[i]);
      const auto cats = categorical_summary(shap, feature, labels);
      CsvWriter wc(guard.path("categorical_" + stage + "_" + name + ".csv"),
                   {name, "mean_shap", "count"});
      for (const auto& c : cats)
        wc.write_row({c.level, fmt(c.mean_shap), std::to_string(c.count)});
    };
    categorical(kVesselGroupFeature, "vessel_group",
                [&](int r) { return data.records[r].vessel_group; });
    categorical(kStatusFeature, "status",
                [&](int r) { return std::to_string(data.records[r].nav_status); });
  };

  auto sample_rows = [&](const std::vector<int>& pool, std::uint64_t salt) {
    std::vector<int> rows = pool;
    if (static_cast<int>(rows.size()) > cfg.explain_sample) {
      CounterRng rng(cfg.seed, salt);
      rng.shuffle(rows);
      rows.resize(cfg.explain_sample);
      std::sort(rows.begin(), rows.end());
    }
    return rows;
  };

  std::vector<int> all_rows(static_cast<std::size_t>(n));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  if (bundle.classifier)
    explain_stage(*bundle.classifier, "classifier", sample_rows(all_rows, 11));
  if (bundle.regressor) {
    std::vector<int> positive_rows;
    for (Eigen::Index i = 0; i < n; ++i)
      if (table.sog[i] > 0) positive_rows.push_back(static_cast<int>(i));
    if (!positive_rows.empty())
      explain_stage(*bundle.regressor, "regressor", sample_rows(positive_rows, 12));
  }

  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_risk_map(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("risk-map: --input is required");
  if (cfg.curve.empty()) throw ConfigError("risk-map: --curve is required");
  OutputGuard guard(cfg.out_dir);
  ManifestWriter manifest{"risk-map", &cfg};
  manifest.inputs = {cfg.input, cfg.curve};

  DataTable data = read_data_csv(cfg.input);
  if (!data.has_env)
    throw DataError("risk-map needs the icec column; run collocate first");
  const SafeSpeedCurve curve = SafeSpeedCurve::from_csv(cfg.curve);
  std::vector<int> flags(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i)
    flags[i] = ice_risk_indicator(data.records[i].sog, data.env[i].icec, curve);
  const RiskGrid grid = aggregate_risk_grid(data.records, flags, cfg.resolution);

  {
    CsvWriter w(guard.path("risk_grid.csv"),
                {"lon_cell", "lat_cell", "n", "proportion"});
    for (const auto& c : grid.cells)
      w.write_row({fmt(cell_lon(c.cell, cfg.resolution)),
                   fmt(cell_lat(c.cell, cfg.resolution)), std::to_string(c.n),
                   fmt(c.proportion)});
  }
  {
    const auto top = grid.top_density(10);
    CsvWriter w(guard.path("top_cells.csv"),
                {"rank", "lon_cell", "lat_cell", "n", "proportion"});
    for (std::size_t i = 0; i < top.size(); ++i)
      w.write_row({std::to_string(i + 1), fmt(cell_lon(top[i].cell, cfg.resolution)),
                   fmt(cell_lat(top[i].cell, cfg.resolution)),
                   std::to_string(top[i].n), fmt(top[i].proportion)});
  }
  auto outputs = guard.commit();
  manifest.write(guard, outputs);
  return outputs;
}

std::vector<std::string> run_command(const std::string& command,
                                     const PipelineConfig& cfg) {
  if (command == "simulate") return run_simulate(cfg);
  if (command == "ingest") return run_ingest(cfg);
  if (command == "collocate") return run_collocate(cfg);
  if (command == "train-two-stage") return run_train_two_stage(cfg);
  if (command == "train-classifier") return run_train_classifier(cfg);
  if (command == "train-regressor") return run_train_regressor(cfg);
  if (command == "evaluate") return run_evaluate(cfg);
  if (command == "explain") return run_explain(cfg);
  if (command == "risk-map") return run_risk_map(cfg);
  throw ConfigError("unknown command: " + command);
}

}  // namespace sogmix
