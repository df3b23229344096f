#pragma once

#include <map>
#include <string>
#include <vector>

#include "oobforest/dataset.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/rng.hpp"

namespace oobforest {

// Configuration of the penalized Gini impurity
//
//   PG(t) = alpha * c * G_oob(t) + (1 - alpha) * G_in(t)
//           + (lambda / 2) * sum_d (mu_oob_d - mu_in_d)^2
//
// with G = sum_d p_d (1 - p_d) and c = n_oob / (n_oob - 1) when bias_correct
// is set. The penalty uses the per-class sum scaled by lambda/2, which for
// binary labels equals lambda * (mu_oob_1 - mu_in_1)^2 and yields the closed
// form PG(0.5, 1) = p_oob + p_in - 2 p_oob p_in.
struct PGConfig {
  double alpha = 1.0;
  double lambda = 0.0;
  bool bias_correct = false;
  // Nodes (or children) with fewer OOB samples than this contribute zero
  // decrease. Defaults to 1, or 2 when bias_correct (N/(N-1) needs N >= 2).
  int min_oob = -1;

  int resolved_min_oob() const { return min_oob >= 0 ? min_oob : (bias_correct ? 2 : 1); }
  void validate() const;  // throws ConfigError
  std::string label() const;  // e.g. "pg:0.5:1" or "pg:1:0:corrected"
};

struct ImportanceReport {
  std::string method;
  std::map<std::string, std::string> config;
  std::vector<double> scores;                 // per feature, mean over trees
  std::vector<std::vector<double>> per_tree;  // per_tree[t] is a p-vector
  std::vector<std::string> feature_names;
};

/// Which population supplies the "OOB" proportions in PG. kInbagSubstituted
/// replaces them with inbag proportions (degenerate case used for checks).
enum class OobStatsSource { kOob, kInbagSubstituted };

/// Penalized Gini impurity of one node. Throws when n_oob < config min_oob
/// (and alpha or lambda make the OOB side matter).
double penalized_impurity(const NodeStats& stats, const PGConfig& config,
                          OobStatsSource source = OobStatsSource::kOob);

/// Per tree, sum over internal nodes t splitting feature k of
/// (N_in(t)/N_in(root)) * [PG(t) - (N_in(l)/N_in(t)) PG(l) - (N_in(r)/N_in(t)) PG(r)],
/// averaged over trees. Nodes where t or a child fails min_oob contribute 0;
/// the skipped count is recorded in the report config.
ImportanceReport pg_importance(const Forest& forest, const PGConfig& config,
                               OobStatsSource source = OobStatsSource::kOob);

/// Classic mean decrease in impurity: PG with alpha = 0, lambda = 0
/// (inbag Gini only). Strictly nonnegative.
ImportanceReport mdi(const Forest& forest);

/// Variance-reduction importance from squared deviations of OOB labels
/// around inbag node means, accumulated per sample. Reported in class-1
/// variance units: for binary labels, pg_importance(alpha=1, lambda=2,
/// uncorrected) equals exactly twice this score. Requires D = 2.
ImportanceReport mdi_oob(const Forest& forest, const Dataset& data);

/// OOB permutation importance: per tree, accuracy on its OOB set minus
/// accuracy after permuting feature k within that OOB set, averaged over
/// n_permutations draws and over trees. Trees with an empty OOB set are
/// skipped (their per_tree row stays 0 and they leave the denominator).
ImportanceReport mda_permutation(const Forest& forest, const Dataset& data,
                                 int n_permutations, RngStream& rng);

}  // namespace oobforest
