#include "sflda/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace sflda {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

// Parses a finite double; nullopt for empty, NaN, infinities or garbage.
std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string describe_cell(std::size_t row, const std::string& column) {
  std::ostringstream os;
  os << "row " << row << ", column '" << column << "'";
  return os.str();
}

}  // namespace

Dataset Dataset::create(Matrix X, std::vector<int> labels, std::vector<std::string> feature_names,
                        std::vector<std::string> group_names) {
  if (static_cast<Index>(labels.size()) != X.rows())
    throw ValidationError("label count does not match number of rows");
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != X.cols())
    throw ValidationError("feature name count does not match number of columns");
  if (!X.allFinite()) throw ValidationError("feature matrix contains non-finite values");

  int g = static_cast<int>(group_names.size());
  if (g == 0) {
    for (int label : labels) g = std::max(g, label + 1);
    for (int i = 0; i < g; ++i) group_names.push_back(std::to_string(i));
  }
  if (g < 2) throw ValidationError("at least two groups are required");

  std::vector<Index> counts(static_cast<std::size_t>(g), 0);
  for (int label : labels) {
    if (label < 0 || label >= g)
      throw ValidationError("label " + std::to_string(label) + " outside 0.." + std::to_string(g - 1));
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int i = 0; i < g; ++i) {
    if (counts[static_cast<std::size_t>(i)] < 2)
      throw ValidationError("group '" + group_names[static_cast<std::size_t>(i)] + "' has " +
                            std::to_string(counts[static_cast<std::size_t>(i)]) +
                            " samples; at least 2 are required");
  }

  Dataset d;
  d.X_ = std::move(X);
  d.labels_ = std::move(labels);
  d.feature_names_ = std::move(feature_names);
  if (d.feature_names_.empty()) {
    d.feature_names_.reserve(static_cast<std::size_t>(d.X_.cols()));
    for (Index j = 0; j < d.X_.cols(); ++j) d.feature_names_.push_back("x" + std::to_string(j));
  }
  d.group_names_ = std::move(group_names);
  d.group_counts_ = std::move(counts);
  return d;
}

Dataset Dataset::subset_rows(const IndexList& rows) const {
  Matrix Xs(static_cast<Index>(rows.size()), p());
  std::vector<int> raw;
  raw.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Xs.row(static_cast<Index>(r)) = X_.row(rows[r]);
    raw.push_back(labels_[static_cast<std::size_t>(rows[r])]);
  }
  // Compact labels so that groups absent from the subset disappear,
  // keeping the relative order of the survivors.
  std::vector<int> remap(static_cast<std::size_t>(g()), -1);
  for (int label : raw) remap[static_cast<std::size_t>(label)] = 0;
  std::vector<std::string> names;
  int next = 0;
  for (int i = 0; i < g(); ++i) {
    if (remap[static_cast<std::size_t>(i)] == 0) {
      remap[static_cast<std::size_t>(i)] = next++;
      names.push_back(group_names_[static_cast<std::size_t>(i)]);
    }
  }
  for (int& label : raw) label = remap[static_cast<std::size_t>(label)];
  return create(std::move(Xs), std::move(raw), feature_names_, std::move(names));
}

Dataset Dataset::subset_columns(const IndexList& cols) const {
  Matrix Xs(n(), static_cast<Index>(cols.size()));
  std::vector<std::string> names;
  names.reserve(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    Xs.col(static_cast<Index>(c)) = X_.col(cols[c]);
    names.push_back(feature_names_[static_cast<std::size_t>(cols[c])]);
  }
  return create(std::move(Xs), labels_, std::move(names), group_names_);
}

Dataset Dataset::relabel(std::vector<int> labels, std::vector<std::string> group_names) const {
  return create(X_, std::move(labels), feature_names_, std::move(group_names));
}

Dataset Dataset::with_features(Matrix X, std::vector<std::string> feature_names) const {
  if (X.rows() != n()) throw ValidationError("replacement feature matrix has wrong row count");
  return create(std::move(X), labels_, std::move(feature_names), group_names_);
}

IndexList Dataset::group_rows(int i) const {
  IndexList rows;
  rows.reserve(static_cast<std::size_t>(group_counts_.at(static_cast<std::size_t>(i))));
  for (std::size_t r = 0; r < labels_.size(); ++r)
    if (labels_[r] == i) rows.push_back(static_cast<Index>(r));
  return rows;
}

FeatureTable load_feature_table(const std::filesystem::path& path, const std::string& label_column, bool require_label) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset file " + path.string() + " is empty");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  std::size_t label_idx = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == label_column) label_idx = c;
  if (label_idx == header.size() && require_label)
    throw ValidationError("label column '" + label_column + "' not found in " + path.string());

  FeatureTable table;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_idx) table.feature_names.push_back(header[c]);
  if (label_idx != header.size()) table.labels.emplace();

  std::vector<std::vector<double>> rows;
  std::size_t row_no = 0;  // 1-based data row numbers in messages
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("row " + std::to_string(row_no) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
    std::vector<double> values;
    values.reserve(table.feature_names.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_idx) continue;
      const auto v = parse_number(fields[c]);
      if (!v)
        throw ValidationError("missing or non-numeric value at " + describe_cell(row_no, header[c]));
      values.push_back(*v);
    }
    if (table.labels) {
      const std::string label = trim(fields[label_idx]);
      if (label.empty()) throw ValidationError("missing label at " + describe_cell(row_no, label_column));
      table.labels->push_back(label);
    }
    rows.push_back(std::move(values));
  }

  table.X.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.feature_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < table.feature_names.size(); ++c)
      table.X(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return table;
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& label_column) {
  FeatureTable table = load_feature_table(path, label_column, true);
  std::vector<int> labels;
  std::vector<std::string> group_names;
  std::map<std::string, int> codes;
  for (const auto& label : *table.labels) {
    auto [it, inserted] = codes.emplace(label, static_cast<int>(group_names.size()));
    if (inserted) group_names.push_back(label);
    labels.push_back(it->second);
  }
  return Dataset::create(std::move(table.X), std::move(labels), std::move(table.feature_names), std::move(group_names));
}

void save_dataset(const Dataset& data, const std::filesystem::path& path, const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  out << std::setprecision(17);
  for (const auto& name : data.feature_names()) out << name << ',';
  out << label_column << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) out << data.X()(i, j) << ',';
    out << data.group_names()[static_cast<std::size_t>(data.labels()[static_cast<std::size_t>(i)])] << '\n';
  }
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open matrix file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    std::vector<double> values;
    const auto fields = split_csv_line(line);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = parse_number(fields[c]);
      if (!v)
        throw ValidationError("non-numeric matrix entry at row " + std::to_string(row_no) + ", column " +
                              std::to_string(c + 1));
      values.push_back(*v);
    }
    if (!rows.empty() && values.size() != rows.front().size())
      throw ValidationError("ragged matrix row " + std::to_string(row_no));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ValidationError("matrix file " + path.string() + " is empty");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

void save_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write matrix file " + path.string());
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

}  // namespace sflda
