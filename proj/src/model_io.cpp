#include "sogmix/model_io.hpp"

#include <fstream>

namespace sogmix {

using nlohmann::json;

namespace {

constexpr int kModelSchemaVersion = 1;

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

json tree_to_json(const RegressionTree& tree) {
  json nodes = json::array();
  for (const auto& nd : tree.nodes)
    nodes.push_back(json::array(
        {nd.feature, nd.threshold, nd.left, nd.right, nd.value, nd.cover}));
  return json{{"nodes", std::move(nodes)}};
}

RegressionTree tree_from_json(const json& j) {
  RegressionTree tree;
  for (const auto& row : j.at("nodes")) {
    TreeNode nd;
    nd.feature = row.at(0).get<int>();
    nd.threshold = row.at(1).get<double>();
    nd.left = row.at(2).get<int>();
    nd.right = row.at(3).get<int>();
    nd.value = row.at(4).get<double>();
    nd.cover = row.at(5).get<double>();
    tree.nodes.push_back(nd);
  }
  if (tree.nodes.empty()) throw DataError("tree_from_json: empty tree");
  return tree;
}

json ensemble_to_json(const Ensemble& ens) {
  json trees = json::array();
  for (const auto& t : ens.trees) trees.push_back(tree_to_json(t));
  return json{{"base_score", ens.base_score},
              {"learning_rate", ens.learning_rate},
              {"trees", std::move(trees)}};
}

Ensemble ensemble_from_json(const json& j) {
  Ensemble ens;
  ens.base_score = j.at("base_score").get<double>();
  ens.learning_rate = j.at("learning_rate").get<double>();
  for (const auto& t : j.at("trees")) ens.trees.push_back(tree_from_json(t));
  return ens;
}

json model_to_json(const MixedBoostModel& model) {
  json coeffs = json::array();
  for (const auto& c : model.coefficients) coeffs.push_back(vector_to_json(c));
  return json{
      {"likelihood", model.likelihood == Likelihood::bernoulli_probit
                         ? "bernoulli_probit"
                         : "gaussian"},
      {"ensemble", ensemble_to_json(model.ensemble)},
      {"random_effects",
       {{"factor_names", model.spec.factor_names},
        {"level_counts", model.spec.level_counts},
        {"variances", model.spec.variances},
        {"resid_var", model.spec.resid_var}}},
      {"coefficients", std::move(coeffs)},
      {"seed", model.seed}};
}

MixedBoostModel model_from_json(const json& j) {
  MixedBoostModel m;
  m.likelihood = j.at("likelihood").get<std::string>() == "bernoulli_probit"
                     ? Likelihood::bernoulli_probit
                     : Likelihood::gaussian;
  m.ensemble = ensemble_from_json(j.at("ensemble"));
  const auto& re = j.at("random_effects");
  m.spec.factor_names = re.at("factor_names").get<std::vector<std::string>>();
  m.spec.level_counts = re.at("level_counts").get<std::vector<int>>();
  m.spec.variances = re.at("variances").get<std::vector<double>>();
  m.spec.resid_var = re.at("resid_var").get<double>();
  for (const auto& c : j.at("coefficients"))
    m.coefficients.push_back(vector_from_json(c));
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

json schema_to_json(const FeatureSchema& schema) {
  json cells = json::array();
  for (const auto& c : schema.cell.labels())
    cells.push_back(json::array({c.ix, c.iy}));
  return json{
      {"standardizer",
       {{"mean", vector_to_json(schema.standardizer.means())},
        {"sd", vector_to_json(schema.standardizer.sds())}}},
      {"vessel_group", schema.vessel_group.labels()},
      {"status", schema.status.labels()},
      {"mmsi", schema.mmsi.labels()},
      {"cell", std::move(cells)},
      {"day", schema.day.labels()},
      {"grid_resolution", schema.grid_resolution}};
}

FeatureSchema schema_from_json(const json& j) {
  FeatureSchema s;
  s.standardizer.mean_ = vector_from_json(j.at("standardizer").at("mean"));
  s.standardizer.sd_ = vector_from_json(j.at("standardizer").at("sd"));
  for (const auto& v : j.at("vessel_group"))
    s.vessel_group.fit_insert(v.get<std::string>());
  for (const auto& v : j.at("status")) s.status.fit_insert(v.get<int>());
  for (const auto& v : j.at("mmsi")) s.mmsi.fit_insert(v.get<std::string>());
  for (const auto& v : j.at("cell"))
    s.cell.fit_insert({v.at(0).get<std::int64_t>(), v.at(1).get<std::int64_t>()});
  for (const auto& v : j.at("day")) s.day.fit_insert(v.get<std::int64_t>());
  s.grid_resolution = j.at("grid_resolution").get<double>();
  return s;
}

json bundle_to_json(const ModelBundle& bundle) {
  json j{{"schema_version", kModelSchemaVersion},
         {"feature_schema", schema_to_json(bundle.schema)},
         {"smearing", bundle.smearing},
         {"smear_sq_resid", bundle.smear_sq_resid},
         {"seed", bundle.seed},
         {"config_hash", bundle.config_hash}};
  if (bundle.classifier) j["classifier"] = model_to_json(*bundle.classifier);
  if (bundle.regressor) j["regressor"] = model_to_json(*bundle.regressor);
  return j;
}

ModelBundle bundle_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kModelSchemaVersion)
    throw DataError("model bundle: unsupported schema_version");
  ModelBundle b;
  b.schema = schema_from_json(j.at("feature_schema"));
  if (j.contains("classifier")) b.classifier = model_from_json(j.at("classifier"));
  if (j.contains("regressor")) b.regressor = model_from_json(j.at("regressor"));
  b.smearing = j.at("smearing").get<bool>();
  b.smear_sq_resid = j.at("smear_sq_resid").get<double>();
  b.seed = j.at("seed").get<std::uint64_t>();
  b.config_hash = j.at("config_hash").get<std::string>();
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << bundle_to_json(bundle).dump(1) << "\n";
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed model file " + path + ": " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace sogmix
