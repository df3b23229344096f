#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oobforest/dataset.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/importance.hpp"

namespace oobforest {

/// Which population supplies node proportions and marginalization weights.
enum class CoverSource { kInbag, kOob };

/// Sample-membership filter for per-tree aggregation.
enum class SampleSplit { kAll, kInbag, kOob };

enum class AttributionKind { kCfc, kShap };

// Per-node class-1 value and cover weight under one CoverSource. Nodes with
// an empty OOB population inherit the nearest ancestor's value and carry
// zero cover weight, so path walks stay total without inventing data.
struct CoverView {
  std::vector<double> cover;
  std::vector<double> value;
};

/// Throws DataError for CoverSource::kOob when the tree's OOB set is empty.
CoverView build_cover_view(const Tree& tree, CoverSource source);

/// Value of x's leaf under the view (the single-tree model output the
/// attributions of that cover decompose).
double predict_value(const Tree& tree, const CoverView& view, const double* x);

/// Conditional feature contributions along x's decision path: at each
/// internal node splitting feature k, adds value(child entered) - value(node)
/// to component k. Unvisited features get 0.
std::vector<double> cfc_tree(const Tree& tree, const double* x, CoverSource source,
                             std::size_t p);

/// Path-dependent TreeSHAP: Shapley values of the game whose value for a
/// feature subset S follows x's path for features in S and marginalizes the
/// rest by cover-weighted descent. Agrees exactly with brute_force_shap.
std::vector<double> tree_shap(const Tree& tree, const double* x, CoverSource source,
                              std::size_t p);

/// Shapley values by explicit enumeration of all 2^p feature subsets with
/// cover-weighted conditional expectations. Test oracle; requires p <= 15.
std::vector<double> brute_force_shap(const Tree& tree, const double* x,
                                     CoverSource source, std::size_t p);

// Local attributions for every sample in a dataset, aggregated over trees
// three ways at once: over all trees, over trees where the sample was inbag,
// and over trees where it was OOB. For CoverSource::kOob, trees with an
// empty OOB set are excluded everywhere (count in trees_used).
struct AttributionMatrix {
  AttributionKind kind = AttributionKind::kCfc;
  CoverSource cover = CoverSource::kInbag;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t trees_used = 0;

  std::vector<double> mean_all;    // n * p, mean over used trees
  std::vector<double> mean_inbag;  // mean over used trees with sample inbag
  std::vector<double> mean_oob;
  std::vector<int> inbag_tree_count;  // per sample
  std::vector<int> oob_tree_count;

  double base_all = 0.0;               // mean root value over used trees
  std::vector<double> base_inbag;      // per sample
  std::vector<double> base_oob;

  std::vector<int> sample_ids;
  std::vector<std::string> feature_names;

  /// Tree-averaged attribution of feature k for sample i under the split.
  /// Throws DataError when the sample appears in no tree of that split.
  double value(std::size_t i, std::size_t k, SampleSplit split) const;
  double base_value(std::size_t i, SampleSplit split) const;
  int split_count(std::size_t i, SampleSplit split) const;
};

/// CFC attributions for all rows of `data`.
AttributionMatrix cfc_forest(const Forest& forest, const Dataset& data,
                             CoverSource source, int jobs = 0);

/// TreeSHAP attributions for all rows of `data`.
AttributionMatrix shap_forest(const Forest& forest, const Dataset& data,
                              CoverSource source, int jobs = 0);

/// Global CFC importance: per feature, sum over samples of the absolute
/// tree-averaged contribution (absolute value applied after tree averaging).
ImportanceReport global_cfc(const AttributionMatrix& attr);

/// Mean absolute attribution per feature over the samples selected by split.
ImportanceReport mean_abs_attribution(const AttributionMatrix& attr, SampleSplit split);

/// y-weighted score: per feature, |mean over selected samples of value * y|.
/// Requires SHAP kind and binary labels. Optionally scaled to the maximum.
ImportanceReport weighted_shap(const AttributionMatrix& attr,
                               const std::vector<int>& labels, SampleSplit split,
                               bool max_normalize = false);

/// Denominator choice for mdi_via_cfc: the full subset size or only samples
/// with y = 1 (the two normalizations differ by |subset|/|subset[y=1]|).
enum class CfcNormalization { kByAll, kByPositives };

/// Covariance form of MDI for one tree: (1/norm) * sum over the subset of
/// f_k(x_i) * y_i, with f evaluated under INBAG cover and inbag sums taken
/// with bootstrap multiplicity. kByAll over the inbag subset reproduces the
/// node-wise variance-form MDI exactly. Requires binary labels.
std::vector<double> mdi_via_cfc(const Tree& tree, const Dataset& data,
                                SampleSplit subset,
                                CfcNormalization norm = CfcNormalization::kByAll);

}  // namespace oobforest
