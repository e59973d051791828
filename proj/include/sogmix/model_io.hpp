#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "sogmix/ais_features.hpp"
#include "sogmix/mixed_boost.hpp"
#include "sogmix/two_stage.hpp"

namespace sogmix {

// One trained pipeline artifact: the fitted feature schema plus whichever
// stages were trained. JSON round trips are bit-exact for every double.
struct ModelBundle {
  FeatureSchema schema;
  std::optional<MixedBoostModel> classifier;
  std::optional<MixedBoostModel> regressor;
  bool smearing = false;
  double smear_sq_resid = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

nlohmann::json tree_to_json(const RegressionTree& tree);
RegressionTree tree_from_json(const nlohmann::json& j);

nlohmann::json ensemble_to_json(const Ensemble& ens);
Ensemble ensemble_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const MixedBoostModel& model);
MixedBoostModel model_from_json(const nlohmann::json& j);

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);

void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

}  // namespace sogmix
