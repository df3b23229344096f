#include "oobforest/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "oobforest/errors.hpp"
#include "oobforest/threading.hpp"

namespace oobforest {

CoverView build_cover_view(const Tree& tree, CoverSource source) {
  CoverView view;
  const std::size_t n_nodes = tree.nodes.size();
  view.cover.resize(n_nodes);
  view.value.resize(n_nodes);
  if (source == CoverSource::kInbag) {
    for (std::size_t id = 0; id < n_nodes; ++id) {
      view.cover[id] = tree.nodes[id].stats.n_in;
      view.value[id] = tree.nodes[id].stats.mu_in(1);
    }
    return view;
  }
  if (!tree.nodes[0].stats.has_oob()) {
    throw DataError("tree has an empty OOB set; OOB cover undefined");
  }
  // parent-first traversal so inherited values are already resolved
  view.cover[0] = tree.nodes[0].stats.n_oob;
  view.value[0] = tree.nodes[0].stats.mu_oob(1);
  for (std::size_t id = 0; id < n_nodes; ++id) {
    const TreeNode& node = tree.nodes[id];
    if (node.is_leaf()) continue;
    for (const int child : {node.split->left, node.split->right}) {
      const NodeStats& s = tree.nodes[static_cast<std::size_t>(child)].stats;
      view.cover[static_cast<std::size_t>(child)] = s.n_oob;
      view.value[static_cast<std::size_t>(child)] =
          s.has_oob() ? s.mu_oob(1) : view.value[id];
    }
  }
  return view;
}

double predict_value(const Tree& tree, const CoverView& view, const double* x) {
  return view.value[static_cast<std::size_t>(tree.leaf_for(x))];
}

namespace {

void cfc_into(const Tree& tree, const CoverView& view, const double* x, double* out) {
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const SplitRecord& s = *tree.nodes[static_cast<std::size_t>(id)].split;
    const int child = x[s.feature] <= s.threshold ? s.left : s.right;
    out[s.feature] += view.value[static_cast<std::size_t>(child)] -
                      view.value[static_cast<std::size_t>(id)];
    id = child;
  }
}

// --- path-dependent TreeSHAP (extend/unwind path bookkeeping) ---

struct PathElement {
  int feature_index;
  double zero_fraction;  // fraction of cover that flows past this split
  double one_fraction;   // 1 when x's path goes this way, else 0 (or inherited)
  double pweight;        // permutation weight of paths with this many "ones"
};

void extend_path(PathElement* path, int depth, double zero_fraction,
                 double one_fraction, int feature_index) {
  path[depth] = {feature_index, zero_fraction, one_fraction,
                 depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].pweight +=
        one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight =
        zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) /
                        (static_cast<double>(i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) /
                                   static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) /
                        (zero_fraction * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (depth + 1) /
                         (static_cast<double>(i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero_fraction * (depth - i) /
                                               static_cast<double>(depth + 1);
    } else if (zero_fraction != 0.0) {
      total += (path[i].pweight / zero_fraction) * (depth + 1) /
               static_cast<double>(depth - i);
    }
  }
  return total;
}

void shap_recurse(const Tree& tree, const CoverView& view, const double* x,
                  double* phi, int node_id, int depth, PathElement* parent_path,
                  double parent_zero_fraction, double parent_one_fraction,
                  int parent_feature_index) {
  PathElement* path = parent_path + depth + 1;
  std::copy(parent_path, parent_path + depth + 1, path);
  extend_path(path, depth, parent_zero_fraction, parent_one_fraction,
              parent_feature_index);

  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
  const std::size_t nid = static_cast<std::size_t>(node_id);
  // zero-cover nodes act as leaves carrying their inherited value
  if (node.is_leaf() || view.cover[nid] == 0.0) {
    const double leaf_value = view.value[nid];
    for (int i = 1; i <= depth; ++i) {
      const double w = unwound_path_sum(path, depth, i);
      phi[path[i].feature_index] +=
          w * (path[i].one_fraction - path[i].zero_fraction) * leaf_value;
    }
    return;
  }

  const SplitRecord& s = *node.split;
  const int hot = x[s.feature] <= s.threshold ? s.left : s.right;
  const int cold = hot == s.left ? s.right : s.left;
  const double hot_zero_fraction =
      view.cover[static_cast<std::size_t>(hot)] / view.cover[nid];
  const double cold_zero_fraction =
      view.cover[static_cast<std::size_t>(cold)] / view.cover[nid];

  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;
  int path_index = 0;
  for (; path_index <= depth; ++path_index) {
    if (path[path_index].feature_index == s.feature) break;
  }
  if (path_index != depth + 1) {
    incoming_zero_fraction = path[path_index].zero_fraction;
    incoming_one_fraction = path[path_index].one_fraction;
    unwind_path(path, depth, path_index);
    depth -= 1;
  }

  const double hot_zero = hot_zero_fraction * incoming_zero_fraction;
  const double cold_zero = cold_zero_fraction * incoming_zero_fraction;
  if (hot_zero != 0.0 || incoming_one_fraction != 0.0) {
    shap_recurse(tree, view, x, phi, hot, depth + 1, path, hot_zero,
                 incoming_one_fraction, s.feature);
  }
  if (cold_zero != 0.0) {
    shap_recurse(tree, view, x, phi, cold, depth + 1, path, cold_zero, 0.0,
                 s.feature);
  }
}

std::size_t shap_arena_size(int max_depth) {
  const std::size_t d = static_cast<std::size_t>(max_depth) + 2;
  return d * (d + 1);
}

void shap_into(const Tree& tree, const CoverView& view, const double* x,
               double* phi, std::vector<PathElement>& arena) {
  const std::size_t need = shap_arena_size(tree.max_depth_reached);
  if (arena.size() < need) arena.resize(need);
  shap_recurse(tree, view, x, phi, 0, 0, arena.data(), 1.0, 1.0, -1);
}

}  // namespace

std::vector<double> cfc_tree(const Tree& tree, const double* x, CoverSource source,
                             std::size_t p) {
  const CoverView view = build_cover_view(tree, source);
  std::vector<double> out(p, 0.0);
  cfc_into(tree, view, x, out.data());
  return out;
}

std::vector<double> tree_shap(const Tree& tree, const double* x, CoverSource source,
                              std::size_t p) {
  const CoverView view = build_cover_view(tree, source);
  std::vector<double> phi(p, 0.0);
  std::vector<PathElement> arena;
  shap_into(tree, view, x, phi.data(), arena);
  return phi;
}

namespace {

// conditional expectation of the tree under the cover, with features in
// `mask` pinned to x's path
double game_value(const Tree& tree, const CoverView& view, const double* x,
                  std::uint64_t mask, int node_id) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
  const std::size_t nid = static_cast<std::size_t>(node_id);
  if (node.is_leaf() || view.cover[nid] == 0.0) return view.value[nid];
  const SplitRecord& s = *node.split;
  if (mask & (std::uint64_t{1} << s.feature)) {
    const int child = x[s.feature] <= s.threshold ? s.left : s.right;
    return game_value(tree, view, x, mask, child);
  }
  const double wl = view.cover[static_cast<std::size_t>(s.left)] / view.cover[nid];
  const double wr = view.cover[static_cast<std::size_t>(s.right)] / view.cover[nid];
  double v = 0.0;
  if (wl > 0.0) v += wl * game_value(tree, view, x, mask, s.left);
  if (wr > 0.0) v += wr * game_value(tree, view, x, mask, s.right);
  return v;
}

}  // namespace

std::vector<double> brute_force_shap(const Tree& tree, const double* x,
                                     CoverSource source, std::size_t p) {
  if (p > 15) throw ConfigError("brute_force_shap: p must be <= 15");
  const CoverView view = build_cover_view(tree, source);

  const std::uint64_t n_masks = std::uint64_t{1} << p;
  std::vector<double> v(n_masks);
  for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
    v[mask] = game_value(tree, view, x, mask, 0);
  }

  std::vector<double> factorial(p + 1, 1.0);
  for (std::size_t i = 1; i <= p; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
  const double p_factorial = factorial[p];

  std::vector<double> phi(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    const std::uint64_t bit = std::uint64_t{1} << k;
    for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const int s = static_cast<int>(__builtin_popcountll(mask));
      const double w = factorial[static_cast<std::size_t>(s)] *
                       factorial[p - static_cast<std::size_t>(s) - 1] / p_factorial;
      phi[k] += w * (v[mask | bit] - v[mask]);
    }
  }
  return phi;
}

double AttributionMatrix::value(std::size_t i, std::size_t k, SampleSplit split) const {
  switch (split) {
    case SampleSplit::kAll:
      return mean_all[i * p + k];
    case SampleSplit::kInbag:
      if (inbag_tree_count[i] == 0) {
        throw DataError("sample " + std::to_string(i) + " inbag in zero trees");
      }
      return mean_inbag[i * p + k];
    case SampleSplit::kOob:
      if (oob_tree_count[i] == 0) {
        throw DataError("sample " + std::to_string(i) + " OOB in zero trees");
      }
      return mean_oob[i * p + k];
  }
  return 0.0;
}

double AttributionMatrix::base_value(std::size_t i, SampleSplit split) const {
  switch (split) {
    case SampleSplit::kAll:
      return base_all;
    case SampleSplit::kInbag:
      if (inbag_tree_count[i] == 0) {
        throw DataError("sample " + std::to_string(i) + " inbag in zero trees");
      }
      return base_inbag[i];
    case SampleSplit::kOob:
      if (oob_tree_count[i] == 0) {
        throw DataError("sample " + std::to_string(i) + " OOB in zero trees");
      }
      return base_oob[i];
  }
  return 0.0;
}

int AttributionMatrix::split_count(std::size_t i, SampleSplit split) const {
  switch (split) {
    case SampleSplit::kAll:
      return static_cast<int>(trees_used);
    case SampleSplit::kInbag:
      return inbag_tree_count[i];
    case SampleSplit::kOob:
      return oob_tree_count[i];
  }
  return 0;
}

namespace {

AttributionMatrix attribute_forest(const Forest& forest, const Dataset& data,
                                   AttributionKind kind, CoverSource source,
                                   int jobs) {
  if (forest.trees.empty()) throw DataError("empty forest");
  if (static_cast<int>(data.p) != forest.p) {
    throw DataError("dataset width does not match forest");
  }

  std::vector<std::size_t> usable;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    if (source == CoverSource::kInbag || forest.trees[t].nodes[0].stats.has_oob()) {
      usable.push_back(t);
    }
  }
  if (usable.empty()) throw DataError("no tree has a nonempty OOB set");

  std::vector<CoverView> views(usable.size());
  parallel_for(usable.size(), jobs, [&](std::size_t u) {
    views[u] = build_cover_view(forest.trees[usable[u]], source);
  });

  AttributionMatrix attr;
  attr.kind = kind;
  attr.cover = source;
  attr.n = data.n;
  attr.p = data.p;
  attr.trees_used = usable.size();
  attr.feature_names = forest.column_names;
  attr.mean_all.assign(data.n * data.p, 0.0);
  attr.mean_inbag.assign(data.n * data.p, 0.0);
  attr.mean_oob.assign(data.n * data.p, 0.0);
  attr.inbag_tree_count.assign(data.n, 0);
  attr.oob_tree_count.assign(data.n, 0);
  attr.base_inbag.assign(data.n, 0.0);
  attr.base_oob.assign(data.n, 0.0);
  attr.sample_ids.resize(data.n);
  for (std::size_t i = 0; i < data.n; ++i) attr.sample_ids[i] = static_cast<int>(i);

  double base_sum = 0.0;
  for (std::size_t u = 0; u < usable.size(); ++u) base_sum += views[u].value[0];
  attr.base_all = base_sum / static_cast<double>(usable.size());

  int max_depth = 0;
  for (const std::size_t t : usable) {
    max_depth = std::max(max_depth, forest.trees[t].max_depth_reached);
  }

  parallel_for(data.n, jobs, [&](std::size_t i) {
    const double* x = data.row(i);
    std::vector<double> contrib(data.p);
    std::vector<PathElement> arena(shap_arena_size(max_depth));
    double* all = attr.mean_all.data() + i * data.p;
    double* in = attr.mean_inbag.data() + i * data.p;
    double* oob = attr.mean_oob.data() + i * data.p;

    for (std::size_t u = 0; u < usable.size(); ++u) {
      const Tree& tree = forest.trees[usable[u]];
      std::fill(contrib.begin(), contrib.end(), 0.0);
      if (kind == AttributionKind::kCfc) {
        cfc_into(tree, views[u], x, contrib.data());
      } else {
        shap_into(tree, views[u], x, contrib.data(), arena);
      }
      const bool is_inbag = tree.inbag_multiplicity[i] > 0;
      const double root_value = views[u].value[0];
      for (std::size_t k = 0; k < data.p; ++k) all[k] += contrib[k];
      if (is_inbag) {
        ++attr.inbag_tree_count[i];
        attr.base_inbag[i] += root_value;
        for (std::size_t k = 0; k < data.p; ++k) in[k] += contrib[k];
      } else {
        ++attr.oob_tree_count[i];
        attr.base_oob[i] += root_value;
        for (std::size_t k = 0; k < data.p; ++k) oob[k] += contrib[k];
      }
    }

    const double n_used = static_cast<double>(usable.size());
    for (std::size_t k = 0; k < data.p; ++k) all[k] /= n_used;
    if (attr.inbag_tree_count[i] > 0) {
      const double c = static_cast<double>(attr.inbag_tree_count[i]);
      attr.base_inbag[i] /= c;
      for (std::size_t k = 0; k < data.p; ++k) in[k] /= c;
    }
    if (attr.oob_tree_count[i] > 0) {
      const double c = static_cast<double>(attr.oob_tree_count[i]);
      attr.base_oob[i] /= c;
      for (std::size_t k = 0; k < data.p; ++k) oob[k] /= c;
    }
  });
  return attr;
}

std::string split_name(SampleSplit split) {
  switch (split) {
    case SampleSplit::kAll: return "all";
    case SampleSplit::kInbag: return "inbag";
    case SampleSplit::kOob: return "oob";
  }
  return "?";
}

std::string cover_name(CoverSource source) {
  return source == CoverSource::kInbag ? "inbag" : "oob";
}

}  // namespace

AttributionMatrix cfc_forest(const Forest& forest, const Dataset& data,
                             CoverSource source, int jobs) {
  return attribute_forest(forest, data, AttributionKind::kCfc, source, jobs);
}

AttributionMatrix shap_forest(const Forest& forest, const Dataset& data,
                              CoverSource source, int jobs) {
  return attribute_forest(forest, data, AttributionKind::kShap, source, jobs);
}

ImportanceReport global_cfc(const AttributionMatrix& attr) {
  if (attr.kind != AttributionKind::kCfc) throw ConfigError("global_cfc needs CFC attributions");
  ImportanceReport report;
  report.method = "cfc";
  report.feature_names = attr.feature_names;
  report.config["cover"] = cover_name(attr.cover);
  report.scores.assign(attr.p, 0.0);
  for (std::size_t i = 0; i < attr.n; ++i) {
    for (std::size_t k = 0; k < attr.p; ++k) {
      report.scores[k] += std::abs(attr.mean_all[i * attr.p + k]);
    }
  }
  return report;
}

ImportanceReport mean_abs_attribution(const AttributionMatrix& attr, SampleSplit split) {
  ImportanceReport report;
  report.method = (attr.kind == AttributionKind::kShap ? "shap" : "cfc");
  if (split != SampleSplit::kAll) report.method += "_" + split_name(split);
  report.feature_names = attr.feature_names;
  report.config["cover"] = cover_name(attr.cover);
  report.config["split"] = split_name(split);
  report.scores.assign(attr.p, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < attr.n; ++i) {
    if (attr.split_count(i, split) == 0) continue;
    ++used;
    for (std::size_t k = 0; k < attr.p; ++k) {
      report.scores[k] += std::abs(attr.value(i, k, split));
    }
  }
  if (used == 0) throw DataError("no samples in the requested split");
  for (double& s : report.scores) s /= static_cast<double>(used);
  return report;
}

ImportanceReport weighted_shap(const AttributionMatrix& attr,
                               const std::vector<int>& labels, SampleSplit split,
                               bool max_normalize) {
  if (attr.kind != AttributionKind::kShap) {
    throw ConfigError("weighted_shap needs SHAP attributions");
  }
  if (labels.size() != attr.n) throw DataError("label count mismatch");
  for (const int y : labels) {
    if (y < 0 || y > 1) throw DataError("weighted_shap requires binary labels");
  }
  ImportanceReport report;
  report.method = "wshap";
  if (split != SampleSplit::kAll) report.method += "_" + split_name(split);
  report.feature_names = attr.feature_names;
  report.config["cover"] = cover_name(attr.cover);
  report.config["split"] = split_name(split);
  report.config["weighted"] = "true";
  report.scores.assign(attr.p, 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < attr.n; ++i) {
    if (attr.split_count(i, split) == 0) continue;
    ++used;
    const double y = static_cast<double>(labels[i]);
    for (std::size_t k = 0; k < attr.p; ++k) {
      report.scores[k] += attr.value(i, k, split) * y;
    }
  }
  if (used == 0) throw DataError("no samples in the requested split");
  for (double& s : report.scores) s = std::abs(s / static_cast<double>(used));
  if (max_normalize) {
    const double m = *std::max_element(report.scores.begin(), report.scores.end());
    if (m > 0.0) {
      for (double& s : report.scores) s /= m;
    }
    report.config["max_normalized"] = "true";
  }
  return report;
}

std::vector<double> mdi_via_cfc(const Tree& tree, const Dataset& data,
                                SampleSplit subset, CfcNormalization norm) {
  if (data.n_classes != 2) throw DataError("mdi_via_cfc requires binary labels");
  if (subset == SampleSplit::kAll) {
    throw ConfigError("mdi_via_cfc: subset must be inbag or oob");
  }
  const CoverView view = build_cover_view(tree, CoverSource::kInbag);
  std::vector<double> contrib(data.p);
  std::vector<double> sums(data.p, 0.0);
  double total_weight = 0.0;
  double positive_weight = 0.0;

  for (std::size_t i = 0; i < data.n; ++i) {
    const int mult = tree.inbag_multiplicity[i];
    const double w = subset == SampleSplit::kInbag ? static_cast<double>(mult)
                                                   : (mult == 0 ? 1.0 : 0.0);
    if (w == 0.0) continue;
    total_weight += w;
    const double y = static_cast<double>(data.labels[i]);
    positive_weight += w * y;
    if (y == 0.0) continue;  // zero label contributes nothing to the sums
    std::fill(contrib.begin(), contrib.end(), 0.0);
    cfc_into(tree, view, data.row(i), contrib.data());
    for (std::size_t k = 0; k < data.p; ++k) sums[k] += w * contrib[k] * y;
  }

  const double denom =
      norm == CfcNormalization::kByAll ? total_weight : positive_weight;
  if (denom <= 0.0) throw DataError("mdi_via_cfc: empty subset");
  for (double& s : sums) s /= denom;
  return sums;
}

}  // namespace oobforest
