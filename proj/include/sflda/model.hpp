#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sflda/common.hpp"

namespace sflda {

inline constexpr int kModelSchemaVersion = 1;

// Clustering used for one discriminant vector: original feature -> cluster
// id, -1 for features that were no longer in play at that step.
struct VectorClusterMap {
  int k = 0;
  std::vector<int> assignment;
};

// Fitted sequence of sparse discriminant vectors with nearest-centroid
// classification in score space. Vectors are expressed over the original
// (standardized) features: when features were clustered, each member of a
// cluster carries the cluster weight divided by the cluster size, so a score
// is just a dot product.
struct DiscriminantModel {
  Index p = 0;
  std::vector<Vector> vectors;
  std::vector<IndexList> supports;
  std::vector<double> lambda;
  Matrix centroids;  // g x d
  Vector center;     // per-feature mean subtracted before scoring
  Vector scale;      // per-feature divisor applied after centering
  std::optional<std::vector<VectorClusterMap>> cluster_map;
  std::vector<std::string> group_names;
  std::vector<std::string> feature_names;
  int majority_class = 0;
  std::string strategy = "all-groups-sequential";
  bool diagonal_mode = false;
  std::string s_divisor = "n-g";

  int g() const { return static_cast<int>(group_names.size()); }
  Index d() const { return static_cast<Index>(vectors.size()); }
  bool is_zero() const;
  // Union of all supports, ascending.
  IndexList selected_features() const;
  // Re-derives supports from vectors and checks shapes; throws ValidationError.
  void validate() const;
};

void save_model(const DiscriminantModel& model, const std::filesystem::path& path);
DiscriminantModel load_model(const std::filesystem::path& path);

std::string model_to_json(const DiscriminantModel& model);
DiscriminantModel model_from_json(const std::string& text);

}  // namespace sflda
