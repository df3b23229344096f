#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oobforest/errors.hpp"
#include "oobforest/rng.hpp"

namespace oobforest {

/// Arity marker for columns that carry real-valued (non-categorical) data.
inline constexpr int kContinuous = -1;

// Numeric-encoded tabular dataset. Immutable after load; safe to share
// across threads.
struct Dataset {
  std::vector<double> x;                 // row-major, n * p
  std::vector<int> labels;               // class ids in {0..n_classes-1}
  std::vector<int> arity;                // distinct-value count per column, or kContinuous
  std::vector<std::string> column_names; // feature columns, size p
  std::size_t n = 0;
  std::size_t p = 0;
  int n_classes = 0;
  std::size_t dropped_rows = 0;          // rows removed for missing values at load

  // Decode tables for text columns that were integer-encoded by first
  // appearance; empty for numeric columns. categories[j][code] -> original string.
  std::vector<std::vector<std::string>> categories;

  double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
  const double* row(std::size_t i) const { return x.data() + i * p; }

  /// Builds a dataset from an in-memory column matrix; arity computed from data.
  static Dataset from_columns(const std::vector<std::vector<double>>& columns,
                              std::vector<int> labels,
                              std::vector<std::string> names);

  /// Checks the structural invariants; throws DataError on violation.
  void validate() const;

  /// Recomputes arity for column j from the stored values.
  int observed_arity(std::size_t j) const;

  /// Replaces column j with a random permutation of itself (in a copy).
  Dataset with_shuffled_column(std::size_t j, RngStream& rng) const;
};

/// Loads an RFC-4180-style CSV (header required; "" or "NA" mean missing).
/// Text columns are integer-encoded by first appearance; rows with missing
/// values in the selected columns are dropped and counted.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& feature_columns);

/// Titanic loader: features {PassengerId, Age, Sex, Pclass}, label Survived,
/// rows with missing Age dropped, Sex encoded by first appearance.
Dataset load_titanic(const std::string& path);

}  // namespace oobforest
