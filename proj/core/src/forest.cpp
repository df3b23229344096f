#include "oobforest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oobforest/errors.hpp"
#include "oobforest/threading.hpp"

namespace oobforest {

int ForestParams::resolved_mtry(std::size_t p) const {
  if (mtry > 0) return std::min(mtry, static_cast<int>(p));
  const int m = static_cast<int>(std::floor(std::sqrt(static_cast<double>(p))));
  return std::max(1, m);
}

void ForestParams::validate(std::size_t p) const {
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (mtry < 0 || mtry > static_cast<int>(p)) {
    throw ConfigError("mtry must be in [1, p] (or 0 for sqrt)");
  }
  if (max_depth && *max_depth < 0) throw ConfigError("max_depth must be >= 0");
  if (subsample_ratio < 0.0 || subsample_ratio > 1.0) {
    throw ConfigError("subsample_ratio must be in (0, 1], or 0 for bootstrap");
  }
}

std::vector<int> bootstrap_sample(std::size_t n, RngStream& rng) {
  std::vector<int> multiplicity(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++multiplicity[rng.next_below(n)];
  }
  return multiplicity;
}

double gini_node(const std::vector<double>& class_counts) {
  double total = 0.0;
  for (const double c : class_counts) total += c;
  if (total <= 0.0) throw DataError("gini_node: all-zero class counts");
  double g = 0.0;
  for (const double c : class_counts) {
    const double pd = c / total;
    g += pd * (1.0 - pd);
  }
  return g;
}

namespace {

double gini_from_counts(const std::vector<double>& counts, double total) {
  double g = 0.0;
  for (const double c : counts) {
    const double pd = c / total;
    g += pd * (1.0 - pd);
  }
  return g;
}

}  // namespace

std::optional<BestSplit> best_split(const Dataset& data,
                                    const std::vector<int>& node_samples,
                                    const std::vector<int>& candidate_features,
                                    int min_leaf) {
  const std::size_t n = node_samples.size();
  if (n < 2) return std::nullopt;

  const std::size_t n_classes = static_cast<std::size_t>(data.n_classes);
  std::vector<double> parent_counts(n_classes, 0.0);
  for (const int i : node_samples) {
    parent_counts[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] += 1.0;
  }
  const double n_total = static_cast<double>(n);
  const double g_parent = gini_from_counts(parent_counts, n_total);
  if (g_parent <= 0.0) return std::nullopt;

  std::vector<int> features = candidate_features;
  std::sort(features.begin(), features.end());

  std::optional<BestSplit> best;
  std::vector<std::pair<double, int>> order;  // (value, label)
  order.reserve(n);
  std::vector<double> left_counts(n_classes);

  for (const int f : features) {
    order.clear();
    for (const int i : node_samples) {
      order.emplace_back(data.at(static_cast<std::size_t>(i), static_cast<std::size_t>(f)),
                         data.labels[static_cast<std::size_t>(i)]);
    }
    std::sort(order.begin(), order.end());
    if (order.front().first == order.back().first) continue;  // constant feature

    std::fill(left_counts.begin(), left_counts.end(), 0.0);
    double n_left = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_counts[static_cast<std::size_t>(order[k].second)] += 1.0;
      n_left += 1.0;
      if (order[k].first == order[k + 1].first) continue;
      const double n_right = n_total - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;

      double g_left = 0.0, g_right = 0.0;
      for (std::size_t d = 0; d < n_classes; ++d) {
        const double pl = left_counts[d] / n_left;
        const double pr = (parent_counts[d] - left_counts[d]) / n_right;
        g_left += pl * (1.0 - pl);
        g_right += pr * (1.0 - pr);
      }
      const double decrease =
          g_parent - (n_left / n_total) * g_left - (n_right / n_total) * g_right;
      if (decrease <= 0.0) continue;

      const double threshold = 0.5 * (order[k].first + order[k + 1].first);
      if (!best || decrease > best->decrease ||
          (decrease == best->decrease &&
           (f < best->feature || (f == best->feature && threshold < best->threshold)))) {
        best = BestSplit{f, threshold, decrease};
      }
    }
  }
  return best;
}

namespace {

struct GrowItem {
  int node_id;
  int depth;
  std::vector<int> samples;  // inbag row ids, repeated by multiplicity
};

bool node_is_pure(const Dataset& data, const std::vector<int>& samples) {
  const int first = data.labels[static_cast<std::size_t>(samples.front())];
  for (const int i : samples) {
    if (data.labels[static_cast<std::size_t>(i)] != first) return false;
  }
  return true;
}

void route_and_count(Tree& tree, const Dataset& data, int sample, double weight,
                     bool inbag) {
  const double* x = data.row(static_cast<std::size_t>(sample));
  const std::size_t y = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(sample)]);
  int id = 0;
  for (;;) {
    NodeStats& s = tree.nodes[static_cast<std::size_t>(id)].stats;
    if (inbag) {
      s.n_in += weight;
      s.class_counts_in[y] += weight;
    } else {
      s.n_oob += weight;
      s.class_counts_oob[y] += weight;
    }
    if (tree.nodes[static_cast<std::size_t>(id)].is_leaf()) break;
    id = tree.step(id, x);
  }
}

}  // namespace

Tree fit_tree(const Dataset& data, const ForestParams& params, RngStream& rng) {
  params.validate(data.p);
  const int mtry = params.resolved_mtry(data.p);
  const std::size_t n = data.n;

  Tree tree;
  if (params.subsample_ratio > 0.0) {
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(params.subsample_ratio * static_cast<double>(n))));
    tree.inbag_multiplicity.assign(n, 0);
    for (const int i : rng.sample_without_replacement(static_cast<int>(n), static_cast<int>(k))) {
      tree.inbag_multiplicity[static_cast<std::size_t>(i)] = 1;
    }
  } else {
    tree.inbag_multiplicity = bootstrap_sample(n, rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (tree.inbag_multiplicity[i] == 0) tree.oob_indices.push_back(static_cast<int>(i));
  }

  std::vector<int> root_samples;
  for (std::size_t i = 0; i < n; ++i) {
    for (int m = 0; m < tree.inbag_multiplicity[i]; ++m) {
      root_samples.push_back(static_cast<int>(i));
    }
  }

  tree.nodes.emplace_back();
  std::vector<GrowItem> stack;
  stack.push_back({0, 0, std::move(root_samples)});

  while (!stack.empty()) {
    GrowItem item = std::move(stack.back());
    stack.pop_back();
    tree.max_depth_reached = std::max(tree.max_depth_reached, item.depth);

    const bool depth_capped = params.max_depth && item.depth >= *params.max_depth;
    if (depth_capped || item.samples.size() < 2 ||
        static_cast<int>(item.samples.size()) < 2 * params.min_leaf ||
        node_is_pure(data, item.samples)) {
      continue;  // leaf
    }

    const std::vector<int> candidates =
        rng.sample_without_replacement(static_cast<int>(data.p), mtry);
    const auto split = best_split(data, item.samples, candidates, params.min_leaf);
    if (!split) continue;

    std::vector<int> left_samples, right_samples;
    for (const int i : item.samples) {
      const double v = data.at(static_cast<std::size_t>(i), static_cast<std::size_t>(split->feature));
      (v <= split->threshold ? left_samples : right_samples).push_back(i);
    }

    const int left_id = static_cast<int>(tree.nodes.size());
    const int right_id = left_id + 1;
    tree.nodes[static_cast<std::size_t>(item.node_id)].split =
        SplitRecord{split->feature, split->threshold, left_id, right_id};
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    // push right first so the left subtree is grown (and numbered) next
    stack.push_back({right_id, item.depth + 1, std::move(right_samples)});
    stack.push_back({left_id, item.depth + 1, std::move(left_samples)});
  }

  const std::size_t n_classes = static_cast<std::size_t>(data.n_classes);
  for (auto& node : tree.nodes) {
    node.stats.class_counts_in.assign(n_classes, 0.0);
    node.stats.class_counts_oob.assign(n_classes, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int m = tree.inbag_multiplicity[i];
    if (m > 0) {
      route_and_count(tree, data, static_cast<int>(i), static_cast<double>(m), true);
    } else {
      route_and_count(tree, data, static_cast<int>(i), 1.0, false);
    }
  }
  return tree;
}

Forest fit_forest(const Dataset& data, const ForestParams& params, int jobs) {
  data.validate();
  params.validate(data.p);

  Forest forest;
  forest.params = params;
  forest.n_classes = data.n_classes;
  forest.p = static_cast<int>(data.p);
  forest.column_names = data.column_names;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));

  parallel_for(static_cast<std::size_t>(params.n_trees), jobs, [&](std::size_t t) {
    RngStream rng = RngStream::derive(params.seed, t);
    forest.trees[t] = fit_tree(data, params, rng);
  });
  return forest;
}

std::vector<double> predict_proba(const Forest& forest, const double* x) {
  std::vector<double> proba(static_cast<std::size_t>(forest.n_classes), 0.0);
  for (const Tree& tree : forest.trees) {
    const NodeStats& s = tree.nodes[static_cast<std::size_t>(tree.leaf_for(x))].stats;
    for (int d = 0; d < forest.n_classes; ++d) {
      proba[static_cast<std::size_t>(d)] += s.mu_in(d);
    }
  }
  const double n_trees = static_cast<double>(forest.trees.size());
  for (double& v : proba) v /= n_trees;
  return proba;
}

}  // namespace oobforest
