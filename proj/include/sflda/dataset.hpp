#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sflda/common.hpp"

namespace sflda {

// n x p feature matrix (rows are samples) with integer group labels 0..g-1.
// Construct through Dataset::create, which enforces the invariants.
class Dataset {
 public:
  Dataset() = default;

  // Validates: g >= 2, labels in 0..g-1, every group has at least two
  // samples, all entries finite. `group_names` defaults to "0".."g-1".
  static Dataset create(Matrix X, std::vector<int> labels,
                        std::vector<std::string> feature_names = {},
                        std::vector<std::string> group_names = {});

  const Matrix& X() const { return X_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& group_names() const { return group_names_; }
  const std::vector<Index>& group_counts() const { return group_counts_; }

  Index n() const { return X_.rows(); }
  Index p() const { return X_.cols(); }
  int g() const { return static_cast<int>(group_counts_.size()); }

  // Rows in `rows`; labels are compacted to the groups that remain.
  Dataset subset_rows(const IndexList& rows) const;
  // Columns in `cols`, order preserved.
  Dataset subset_columns(const IndexList& cols) const;
  // Same features, replaced labels (re-encoded per create()).
  Dataset relabel(std::vector<int> labels, std::vector<std::string> group_names) const;
  // Same labels, replaced feature matrix.
  Dataset with_features(Matrix X, std::vector<std::string> feature_names = {}) const;

  // Row indices belonging to group i.
  IndexList group_rows(int i) const;

 private:
  Matrix X_;
  std::vector<int> labels_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> group_names_;
  std::vector<Index> group_counts_;
};

// Reads a CSV with a header row. `label_column` holds the group label (any
// string); every other column must be numeric. Labels are encoded 0..g-1 in
// order of first appearance; the original strings become group_names().
Dataset load_dataset(const std::filesystem::path& path, const std::string& label_column);

// Header CSV read without label encoding or group validation. `labels`
// holds the raw strings of `label_column` when that column is present;
// absence is an error only when `require_label` is set.
struct FeatureTable {
  Matrix X;
  std::vector<std::string> feature_names;
  std::optional<std::vector<std::string>> labels;
};
FeatureTable load_feature_table(const std::filesystem::path& path, const std::string& label_column,
                                bool require_label);

// Writes `data` as CSV: feature columns first, then `label_column` holding
// group_names()[label].
void save_dataset(const Dataset& data, const std::filesystem::path& path,
                  const std::string& label_column = "label");

// Reads a headerless numeric CSV matrix (used for covariance files).
Matrix load_matrix_csv(const std::filesystem::path& path);
void save_matrix_csv(const Matrix& m, const std::filesystem::path& path);

}  // namespace sflda
