#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "sogmix/pipeline.hpp"

namespace {

// 0 success, 2 config error, 3 data error, 4 numerical failure.
int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const sogmix::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const sogmix::DataError*>(&e)) return 3;
  if (dynamic_cast<const sogmix::NumericError*>(&e)) return 4;
  return 1;
}

void add_train_options(CLI::App* cmd, sogmix::TrainConfig& t, const std::string& prefix) {
  cmd->add_option("--" + prefix + "-rounds", t.n_rounds, "Boosting rounds");
  cmd->add_option("--" + prefix + "-learning-rate", t.learning_rate, "Learning rate");
  cmd->add_option("--" + prefix + "-max-depth", t.tree.max_depth, "Tree depth");
  cmd->add_option("--" + prefix + "-min-leaf", t.tree.min_samples_leaf,
                  "Minimum leaf weight");
  cmd->add_option("--" + prefix + "-max-bins", t.tree.max_bins,
                  "Histogram bins");
  cmd->add_option("--" + prefix + "-feature-subsample", t.tree.feature_subsample,
                  "Per-tree feature fraction");
  cmd->add_option("--" + prefix + "-variance-cadence", t.variance_cadence,
                  "Rounds between variance re-estimation");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage vessel speed modeling pipeline"};
  app.set_config("--config", "", "TOML-style config file (flags win)");
  app.require_subcommand(1);

  sogmix::PipelineConfig cfg;
  std::string command;

  app.add_option("--out-dir", cfg.out_dir, "Output directory")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Root seed")->capture_default_str();
  app.add_option("--input", cfg.input, "Input data CSV");
  app.add_option("--lon-min", cfg.lon_min, "Study window")->capture_default_str();
  app.add_option("--lon-max", cfg.lon_max, "Study window")->capture_default_str();
  app.add_option("--lat-min", cfg.lat_min, "Study window")->capture_default_str();
  app.add_option("--lat-max", cfg.lat_max, "Study window")->capture_default_str();
  app.add_option("--month-start", cfg.month_start, "Season start month")
      ->capture_default_str();
  app.add_option("--month-end", cfg.month_end, "Season end month")
      ->capture_default_str();
  app.add_option("--resolution", cfg.resolution, "Grid resolution, degrees")
      ->capture_default_str();
  app.add_option("--folds", cfg.folds, "Cross-validation folds")
      ->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "Generate synthetic AIS data");
  sim->add_option("--n", cfg.synth.n, "Rows");
  sim->add_option("--q-mmsi", cfg.synth.q_mmsi, "Vessel count");
  sim->add_option("--q-cell", cfg.synth.q_cell, "Grid cell count");
  sim->add_option("--q-time", cfg.synth.q_time, "Day count");
  sim->add_option("--var-mmsi", cfg.synth.var_mmsi, "Vessel variance");
  sim->add_option("--var-cell", cfg.synth.var_cell, "Cell variance");
  sim->add_option("--var-time", cfg.synth.var_time, "Day variance");
  sim->add_option("--resid-var", cfg.synth.resid_var, "Observation noise variance");
  sim->add_option("--prevalence", cfg.synth.prevalence, "Target P(SOG>0)");
  sim->add_option("--clf-mean", cfg.synth.clf_mean, "Classifier mean function");
  sim->add_option("--reg-mean", cfg.synth.reg_mean, "Regression mean function");

  app.add_subcommand("ingest", "Filter to the study window and season");

  auto* coll = app.add_subcommand("collocate", "Fill environmental covariates");
  coll->add_option("--raster-dir", cfg.raster_dir, "Directory of <var>.csv rasters");
  coll->add_option("--day-tolerance", cfg.colloc.day_tolerance,
                   "Nearest-day matching window");
  coll->add_option("--n-max", cfg.colloc.n_max, "Neighbor count for IDW/kriging");
  coll->add_option("--idw-power", cfg.colloc.idw_power, "IDW power");

  auto* tts = app.add_subcommand("train-two-stage", "Train both stages with CV");
  auto* tc = app.add_subcommand("train-classifier", "Train the SOG>0 stage");
  auto* tr = app.add_subcommand("train-regressor", "Train the sqrt-SOG stage");
  for (CLI::App* cmd : {tts, tc}) add_train_options(cmd, cfg.classifier, "clf");
  for (CLI::App* cmd : {tts, tr}) add_train_options(cmd, cfg.regressor, "reg");
  tts->add_flag("--smearing", cfg.smearing, "Back-transform bias correction");

  auto* ev = app.add_subcommand("evaluate", "Metrics report from OOF predictions");
  ev->add_option("--oof", cfg.oof, "OOF prediction CSV");
  ev->add_option("--calibration-bins", cfg.calibration_bins, "Calibration bins");
  ev->add_option("--strata", cfg.strata_feature,
                 "Stratified diagnostics: vessel_group or status");

  auto* ex = app.add_subcommand("explain", "SHAP attributions per stage");
  ex->add_option("--model", cfg.model, "Model bundle JSON");
  ex->add_option("--sample", cfg.explain_sample, "Explanation sample size");
  ex->add_option("--bins", cfg.explain_bins, "Marginal summary bins");

  auto* rm = app.add_subcommand("risk-map", "Ice-risk proportions per grid cell");
  rm->add_option("--curve", cfg.curve, "Safe-speed curve CSV (icec_tenths,max_knots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    const auto outputs = sogmix::run_command(command, cfg);
    for (const auto& p : outputs) std::printf("wrote %s\n", p.c_str());
    return 0;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    sogmix::write_error_record(cfg.out_dir, command, code, e.what());
    return code;
  }
}
