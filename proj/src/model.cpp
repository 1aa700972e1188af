#include "sflda/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sflda {

using nlohmann::json;

namespace {

json to_array(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector from_array(const json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
}

}  // namespace

bool DiscriminantModel::is_zero() const {
  for (const auto& v : vectors)
    if (!v.isZero(0.0)) return false;
  return true;
}

IndexList DiscriminantModel::selected_features() const {
  std::set<Index> all;
  for (const auto& s : supports) all.insert(s.begin(), s.end());
  return {all.begin(), all.end()};
}

void DiscriminantModel::validate() const {
  if (supports.size() != vectors.size() || lambda.size() != vectors.size())
    throw ValidationError("model: vectors, supports and lambda lengths differ");
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != p) throw ValidationError("model: discriminant vector has wrong length");
    if (support_of(vectors[k]) != supports[k])
      throw ValidationError("model: stored support of vector " + std::to_string(k) + " disagrees with its non-zeros");
  }
  if (center.size() != p || scale.size() != p) throw ValidationError("model: scaling has wrong length");
  if ((scale.array() <= 0.0).any()) throw ValidationError("model: scale entries must be positive");
  if (g() < 2) throw ValidationError("model: fewer than two groups");
  if (centroids.rows() != g() || centroids.cols() != d()) throw ValidationError("model: centroid matrix has wrong shape");
  if (majority_class < 0 || majority_class >= g()) throw ValidationError("model: majority class out of range");
  if (cluster_map) {
    if (cluster_map->size() != vectors.size()) throw ValidationError("model: one cluster map per vector expected");
    for (const auto& m : *cluster_map)
      if (static_cast<Index>(m.assignment.size()) != p) throw ValidationError("model: cluster map has wrong length");
  }
}

std::string model_to_json(const DiscriminantModel& m) {
  m.validate();
  json j;
  j["version"] = kModelSchemaVersion;
  j["p"] = m.p;
  json vectors = json::array(), supports = json::array();
  for (std::size_t k = 0; k < m.vectors.size(); ++k) {
    vectors.push_back(to_array(m.vectors[k]));
    supports.push_back(m.supports[k]);
  }
  j["vectors"] = vectors;
  j["supports"] = supports;
  j["lambda"] = m.lambda;
  json centroids = json::array();
  for (Index i = 0; i < m.centroids.rows(); ++i) centroids.push_back(to_array(m.centroids.row(i).transpose()));
  j["centroids"] = centroids;
  j["scaling"] = {{"center", to_array(m.center)}, {"scale", to_array(m.scale)}, {"s_divisor", m.s_divisor}};
  if (m.cluster_map) {
    json maps = json::array();
    for (const auto& cm : *m.cluster_map) maps.push_back({{"k", cm.k}, {"assignment", cm.assignment}});
    j["cluster_map"] = maps;
  } else {
    j["cluster_map"] = nullptr;
  }
  j["groups"] = m.group_names;
  j["feature_names"] = m.feature_names;
  j["majority_class"] = m.majority_class;
  j["strategy"] = m.strategy;
  j["diagonal_mode"] = m.diagonal_mode;
  return j.dump(1);
}

DiscriminantModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.contains("version") || j.at("version").get<int>() != kModelSchemaVersion)
      throw ValidationError("model schema version mismatch: expected " + std::to_string(kModelSchemaVersion));
    DiscriminantModel m;
    m.p = j.at("p").get<Index>();
    for (const auto& v : j.at("vectors")) m.vectors.push_back(from_array(v));
    for (const auto& s : j.at("supports")) m.supports.push_back(s.get<IndexList>());
    m.lambda = j.at("lambda").get<std::vector<double>>();
    m.group_names = j.at("groups").get<std::vector<std::string>>();
    const auto& c = j.at("centroids");
    m.centroids.resize(static_cast<Index>(c.size()), static_cast<Index>(m.vectors.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Vector row = from_array(c[i]);
      if (row.size() != m.centroids.cols()) throw ValidationError("model: centroid row has wrong length");
      m.centroids.row(static_cast<Index>(i)) = row.transpose();
    }
    const auto& sc = j.at("scaling");
    m.center = from_array(sc.at("center"));
    m.scale = from_array(sc.at("scale"));
    m.s_divisor = sc.value("s_divisor", std::string("n-g"));
    if (!j.at("cluster_map").is_null()) {
      std::vector<VectorClusterMap> maps;
      for (const auto& cm : j.at("cluster_map"))
        maps.push_back({cm.at("k").get<int>(), cm.at("assignment").get<std::vector<int>>()});
      m.cluster_map = std::move(maps);
    }
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    m.majority_class = j.value("majority_class", 0);
    m.strategy = j.value("strategy", std::string("all-groups-sequential"));
    m.diagonal_mode = j.value("diagonal_mode", false);
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model file does not match the schema: ") + e.what());
  }
}

void save_model(const DiscriminantModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write model file " + path.string());
  out << model_to_json(model) << '\n';
}

DiscriminantModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace sflda
