#include "oobforest/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace oobforest {
namespace {

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA";
}

// Parses one CSV record from the stream, RFC-4180 quoting rules (embedded
// commas, doubled quotes, newlines inside quoted fields). Returns false at EOF.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  int c;
  while ((c = in.get()) != EOF) {
    saw_any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch == '\r') {
      // swallow; handles CRLF
    } else {
      field.push_back(ch);
    }
  }
  if (!saw_any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  RawTable t;
  if (!read_record(in, t.header) || t.header.empty()) {
    throw DataError("missing header row: " + path);
  }
  std::vector<std::string> fields;
  while (read_record(in, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != t.header.size()) {
      throw DataError("row with " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(t.header.size()) +
                      ": " + path);
    }
    t.rows.push_back(fields);
  }
  return t;
}

std::size_t column_index(const RawTable& t, const std::string& name,
                         const std::string& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) {
    throw DataError("column '" + name + "' not found in " + path);
  }
  return static_cast<std::size_t>(it - t.header.begin());
}

// Encodes one selected column over the kept rows. Numeric if every value
// parses as a number, otherwise integer codes by first appearance.
struct EncodedColumn {
  std::vector<double> values;
  std::vector<std::string> categories;  // empty for numeric columns
};

EncodedColumn encode_column(const RawTable& t, std::size_t col,
                            const std::vector<std::size_t>& kept_rows) {
  EncodedColumn out;
  bool numeric = true;
  for (const std::size_t r : kept_rows) {
    double v;
    if (!parse_double(t.rows[r][col], v)) {
      numeric = false;
      break;
    }
  }
  out.values.reserve(kept_rows.size());
  if (numeric) {
    for (const std::size_t r : kept_rows) {
      double v = 0;
      parse_double(t.rows[r][col], v);
      out.values.push_back(v);
    }
  } else {
    std::unordered_map<std::string, int> codes;
    for (const std::size_t r : kept_rows) {
      const std::string& s = t.rows[r][col];
      auto [it, inserted] = codes.emplace(s, static_cast<int>(out.categories.size()));
      if (inserted) out.categories.push_back(s);
      out.values.push_back(static_cast<double>(it->second));
    }
  }
  return out;
}

std::vector<int> encode_labels(const RawTable& t, std::size_t col,
                               const std::vector<std::size_t>& kept_rows,
                               int& n_classes) {
  std::vector<int> labels;
  labels.reserve(kept_rows.size());
  bool integral = true;
  for (const std::size_t r : kept_rows) {
    double v;
    if (!parse_double(t.rows[r][col], v) || v != std::floor(v) || v < 0) {
      integral = false;
      break;
    }
  }
  if (integral) {
    int max_label = 0;
    for (const std::size_t r : kept_rows) {
      double v = 0;
      parse_double(t.rows[r][col], v);
      const int y = static_cast<int>(v);
      labels.push_back(y);
      max_label = std::max(max_label, y);
    }
    n_classes = max_label + 1;
  } else {
    std::unordered_map<std::string, int> codes;
    for (const std::size_t r : kept_rows) {
      const std::string& s = t.rows[r][col];
      auto [it, _] = codes.emplace(s, static_cast<int>(codes.size()));
      labels.push_back(it->second);
    }
    n_classes = static_cast<int>(codes.size());
  }
  if (n_classes < 2) throw DataError("label column has fewer than 2 classes");
  return labels;
}

}  // namespace

Dataset Dataset::from_columns(const std::vector<std::vector<double>>& columns,
                              std::vector<int> labels,
                              std::vector<std::string> names) {
  Dataset d;
  d.p = columns.size();
  d.n = columns.empty() ? labels.size() : columns.front().size();
  d.labels = std::move(labels);
  d.column_names = std::move(names);
  if (d.column_names.size() != d.p) {
    d.column_names.resize(d.p);
    for (std::size_t j = 0; j < d.p; ++j) {
      if (d.column_names[j].empty()) d.column_names[j] = "x" + std::to_string(j);
    }
  }
  d.x.resize(d.n * d.p);
  for (std::size_t j = 0; j < d.p; ++j) {
    if (columns[j].size() != d.n) throw DataError("ragged column matrix");
    for (std::size_t i = 0; i < d.n; ++i) d.x[i * d.p + j] = columns[j][i];
  }
  int max_label = -1;
  for (const int y : d.labels) max_label = std::max(max_label, y);
  d.n_classes = std::max(2, max_label + 1);
  d.categories.assign(d.p, {});
  d.arity.resize(d.p);
  for (std::size_t j = 0; j < d.p; ++j) d.arity[j] = d.observed_arity(j);
  d.validate();
  return d;
}

int Dataset::observed_arity(std::size_t j) const {
  std::set<double> distinct;
  bool integral = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = at(i, j);
    if (v != std::floor(v)) integral = false;
    distinct.insert(v);
  }
  if (!integral) return kContinuous;
  return static_cast<int>(distinct.size());
}

void Dataset::validate() const {
  if (n == 0) throw DataError("empty dataset");
  if (labels.size() != n) throw DataError("label count does not match row count");
  if (x.size() != n * p) throw DataError("feature matrix size mismatch");
  if (n_classes < 2) throw DataError("need at least 2 classes");
  for (const int y : labels) {
    if (y < 0 || y >= n_classes) throw DataError("label outside {0..D-1}");
  }
  if (arity.size() != p) throw DataError("arity metadata size mismatch");
  for (std::size_t j = 0; j < p; ++j) {
    if (arity[j] == kContinuous) continue;
    if (arity[j] != observed_arity(j)) {
      throw DataError("arity metadata for column " + std::to_string(j) +
                      " does not match observed distinct values");
    }
  }
}

Dataset Dataset::with_shuffled_column(std::size_t j, RngStream& rng) const {
  Dataset d = *this;
  std::vector<double> col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = at(i, j);
  rng.shuffle(col);
  for (std::size_t i = 0; i < n; ++i) d.x[i * p + j] = col[i];
  return d;
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& feature_columns) {
  const RawTable t = read_table(path);
  const std::size_t label_col = column_index(t, label_column, path);
  std::vector<std::size_t> feature_cols;
  feature_cols.reserve(feature_columns.size());
  for (const auto& name : feature_columns) {
    feature_cols.push_back(column_index(t, name, path));
  }

  // keep rows with no missing values in any selected column
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    bool ok = !is_missing(t.rows[r][label_col]);
    for (const std::size_t c : feature_cols) {
      if (is_missing(t.rows[r][c])) { ok = false; break; }
    }
    if (ok) kept.push_back(r);
  }
  if (kept.empty()) throw DataError("no rows left after dropping missing values: " + path);

  Dataset d;
  d.n = kept.size();
  d.p = feature_cols.size();
  d.dropped_rows = t.rows.size() - kept.size();
  d.column_names = feature_columns;
  d.labels = encode_labels(t, label_col, kept, d.n_classes);
  d.x.resize(d.n * d.p);
  d.categories.resize(d.p);
  for (std::size_t j = 0; j < d.p; ++j) {
    EncodedColumn col = encode_column(t, feature_cols[j], kept);
    d.categories[j] = std::move(col.categories);
    for (std::size_t i = 0; i < d.n; ++i) d.x[i * d.p + j] = col.values[i];
  }
  d.arity.resize(d.p);
  for (std::size_t j = 0; j < d.p; ++j) d.arity[j] = d.observed_arity(j);
  d.validate();
  return d;
}

Dataset load_titanic(const std::string& path) {
  Dataset d = load_csv(path, "Survived", {"PassengerId", "Age", "Sex", "Pclass"});
  if (d.n_classes != 2) throw DataError("Survived must be binary in " + path);
  return d;
}

}  // namespace oobforest
