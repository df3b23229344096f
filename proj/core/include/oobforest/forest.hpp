#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oobforest/dataset.hpp"
#include "oobforest/rng.hpp"

namespace oobforest {

struct SplitRecord {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
};

// Per-node sample statistics, kept separately for the bootstrap (inbag)
// sample and the tree's out-of-bag sample. Counts are multiplicity-weighted
// for inbag, plain for OOB.
struct NodeStats {
  double n_in = 0.0;
  double n_oob = 0.0;
  std::vector<double> class_counts_in;
  std::vector<double> class_counts_oob;

  double mu_in(int d) const { return class_counts_in[static_cast<std::size_t>(d)] / n_in; }
  bool has_oob() const { return n_oob > 0.0; }
  /// Only defined when has_oob().
  double mu_oob(int d) const { return class_counts_oob[static_cast<std::size_t>(d)] / n_oob; }
};

struct TreeNode {
  std::optional<SplitRecord> split;  // nullopt for leaves
  NodeStats stats;

  bool is_leaf() const { return !split.has_value(); }
};

struct Tree {
  std::vector<TreeNode> nodes;          // root has id 0
  std::vector<int> inbag_multiplicity;  // per original sample; 0 means OOB
  std::vector<int> oob_indices;
  int max_depth_reached = 0;

  /// Child id the feature vector x falls into at internal node `id`.
  int step(int id, const double* x) const {
    const SplitRecord& s = *nodes[static_cast<std::size_t>(id)].split;
    return x[s.feature] <= s.threshold ? s.left : s.right;
  }

  /// Leaf id reached by x from the root.
  int leaf_for(const double* x) const {
    int id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) id = step(id, x);
    return id;
  }
};

struct ForestParams {
  int n_trees = 100;
  int mtry = 0;  // 0: floor(sqrt(p)), clamped to [1, p]
  int min_leaf = 1;
  std::optional<int> max_depth;
  std::uint64_t seed = 0;
  // 0: bootstrap with replacement (n draws). In (0, 1]: subsample
  // floor(ratio * n) rows without replacement instead.
  double subsample_ratio = 0.0;

  int resolved_mtry(std::size_t p) const;
  void validate(std::size_t p) const;  // throws ConfigError
};

struct Forest {
  std::vector<Tree> trees;
  ForestParams params;
  int n_classes = 0;
  int p = 0;
  std::vector<std::string> column_names;
};

/// n bootstrap draws with replacement; returns per-sample multiplicities.
std::vector<int> bootstrap_sample(std::size_t n, RngStream& rng);

/// Gini impurity sum_d p_d (1 - p_d) from class counts. Throws on all-zero counts.
double gini_node(const std::vector<double>& class_counts);

struct BestSplit {
  int feature = -1;
  double threshold = 0.0;
  double decrease = 0.0;  // node-local: G(t) - (nl/n) G(l) - (nr/n) G(r)
};

/// Exhaustive best split over the candidate features and all midpoints
/// between adjacent distinct inbag values. Ties broken by (lowest feature
/// index, lowest threshold). nullopt when no split has positive decrease
/// and min_leaf-feasible children.
std::optional<BestSplit> best_split(const Dataset& data,
                                    const std::vector<int>& node_samples,
                                    const std::vector<int>& candidate_features,
                                    int min_leaf);

/// Grows one tree on a fresh bootstrap drawn from rng, then routes both the
/// inbag sample (with multiplicity) and the OOB sample down the structure to
/// fill NodeStats. OOB data never influences structure.
Tree fit_tree(const Dataset& data, const ForestParams& params, RngStream& rng);

/// Fits params.n_trees trees, tree t on RngStream::derive(params.seed, t).
/// Bit-reproducible for a fixed seed regardless of jobs.
Forest fit_forest(const Dataset& data, const ForestParams& params, int jobs = 0);

/// Average over trees of the inbag class proportions at x's leaf.
std::vector<double> predict_proba(const Forest& forest, const double* x);

}  // namespace oobforest
