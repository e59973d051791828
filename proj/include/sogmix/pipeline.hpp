#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sogmix/common.hpp"
#include "sogmix/geostat.hpp"
#include "sogmix/mixed_boost.hpp"
#include "sogmix/synth.hpp"
#include "sogmix/two_stage.hpp"

namespace sogmix {

// One config drives every subcommand; unknown-to-a-command fields are
// simply unused. All randomness derives from `seed`.
struct PipelineConfig {
  // Paths
  std::string input;       // data CSV (ingest schema)
  std::string raster_dir;  // per-variable raster CSVs for collocate
  std::string out_dir = "out";
  std::string curve;  // ACCESS-style safe-speed CSV (icec_tenths,max_knots)
  std::string model;  // model bundle JSON (evaluate/explain input)
  std::string oof;    // OOF prediction CSV (evaluate input)

  // Study window and season
  double lon_min = -172.0, lon_max = -138.0;
  double lat_min = 66.6, lat_max = 72.5;
  int month_start = 7, month_end = 10;
  double resolution = 0.5;

  // Cross-validation and stages
  int folds = 5;
  std::uint64_t seed = 1;
  TrainConfig classifier;
  TrainConfig regressor;
  bool smearing = false;

  // Collocation
  CollocationConfig colloc = CollocationConfig::defaults();

  // Simulation
  SynthConfig synth;

  // Explanation & evaluation
  int explain_sample = 20000;
  int explain_bins = 20;
  int calibration_bins = 20;
  std::string strata_feature;  // optional stratified diagnostics

  PipelineConfig() {
    classifier.tree.max_depth = 6;
    classifier.tree.min_samples_leaf = 50;
    regressor = classifier;
  }
};

std::string config_hash(const PipelineConfig& cfg);

// Runs one subcommand; returns the list of files written. Partial outputs
// are removed when a command throws; the caller maps exceptions to exit
// codes and writes the error record.
std::vector<std::string> run_command(const std::string& command,
                                     const PipelineConfig& cfg);

// Individual commands (exposed for tests).
std::vector<std::string> run_simulate(const PipelineConfig& cfg);
std::vector<std::string> run_ingest(const PipelineConfig& cfg);
std::vector<std::string> run_collocate(const PipelineConfig& cfg);
std::vector<std::string> run_train_two_stage(const PipelineConfig& cfg);
std::vector<std::string> run_train_classifier(const PipelineConfig& cfg);
std::vector<std::string> run_train_regressor(const PipelineConfig& cfg);
std::vector<std::string> run_evaluate(const PipelineConfig& cfg);
std::vector<std::string> run_explain(const PipelineConfig& cfg);
std::vector<std::string> run_risk_map(const PipelineConfig& cfg);

// Loaded AIS table with optional environmental columns.
struct DataTable {
  std::vector<AisRecord> records;
  std::vector<EnvSample> env;
  bool has_env = false;
};

DataTable read_data_csv(const std::string& path);
void write_error_record(const std::string& out_dir, const std::string& command,
                        int exit_code, const std::string& message);

}  // namespace sogmix
