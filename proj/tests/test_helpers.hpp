#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oobforest/dataset.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/rng.hpp"

namespace oobforest::testing {

inline bool close(double a, double b, double rel, double abs_floor = 1e-14) {
  const double diff = std::abs(a - b);
  return diff <= abs_floor || diff <= rel * std::max(std::abs(a), std::abs(b));
}

// Random binary-label dataset with a mix of continuous and low-arity
// categorical columns and labels that depend on a couple of features.
inline Dataset random_dataset(RngStream& rng, int n, int p) {
  std::vector<std::vector<double>> columns(static_cast<std::size_t>(p));
  std::vector<int> kinds(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    kinds[static_cast<std::size_t>(j)] =
        rng.next_bernoulli(0.5) ? 0 : 2 + static_cast<int>(rng.next_below(5));
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double signal = 0.0;
    for (int j = 0; j < p; ++j) {
      const int kind = kinds[static_cast<std::size_t>(j)];
      const double v = kind == 0
                           ? rng.next_unit()
                           : static_cast<double>(rng.next_below(static_cast<std::uint64_t>(kind)));
      columns[static_cast<std::size_t>(j)].push_back(v);
      if (j < 2) signal += kind == 0 ? v : v / static_cast<double>(kind);
    }
    const double prob = 0.15 + 0.7 * std::min(1.0, signal / 2.0);
    labels[static_cast<std::size_t>(i)] = rng.next_bernoulli(prob) ? 1 : 0;
  }
  // both classes must appear
  labels[0] = 0;
  labels[static_cast<std::size_t>(n - 1)] = 1;
  std::vector<std::string> names(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) names[static_cast<std::size_t>(j)] = "x" + std::to_string(j);
  return Dataset::from_columns(columns, std::move(labels), std::move(names));
}

inline Forest random_forest(RngStream& rng, int n, int p, int n_trees) {
  const Dataset data = random_dataset(rng, n, p);
  ForestParams params;
  params.n_trees = n_trees;
  params.mtry = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(p)));
  params.min_leaf = 1 + static_cast<int>(rng.next_below(3));
  params.seed = rng.next_u64();
  return fit_forest(data, params, 1);
}

// Structurally random tree with consistent dual statistics, grown by
// splitting counts rather than fitting: inbag children stay nonempty, OOB
// children may drain to zero, and features repeat along paths on purpose.
inline Tree synthetic_tree(RngStream& rng, int p, int max_nodes) {
  Tree tree;
  struct Item {
    int id;
    double n_in, n_oob, in1, oob1;
    int parent_feature;
  };
  tree.nodes.emplace_back();
  const double root_in = 8.0 + static_cast<double>(rng.next_below(40));
  const double root_oob = static_cast<double>(1 + rng.next_below(20));
  std::vector<Item> stack{{0,
                           root_in,
                           root_oob,
                           static_cast<double>(rng.next_below(static_cast<std::uint64_t>(root_in) + 1)),
                           static_cast<double>(rng.next_below(static_cast<std::uint64_t>(root_oob) + 1)),
                           -1}};
  int depth_guess = 0;
  while (!stack.empty()) {
    const Item item = stack.back();
    stack.pop_back();
    TreeNode& node = tree.nodes[static_cast<std::size_t>(item.id)];
    node.stats.n_in = item.n_in;
    node.stats.n_oob = item.n_oob;
    node.stats.class_counts_in = {item.n_in - item.in1, item.in1};
    node.stats.class_counts_oob = {item.n_oob - item.oob1, item.oob1};

    const bool can_split = item.n_in >= 2.0 &&
                           static_cast<int>(tree.nodes.size()) + 2 <= max_nodes &&
                           rng.next_bernoulli(0.75);
    if (!can_split) continue;

    // repeat an ancestor's feature about a third of the time
    const int feature = (item.parent_feature >= 0 && rng.next_bernoulli(0.35))
                            ? item.parent_feature
                            : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(p)));
    const double threshold = rng.next_unit();

    auto split_count = [&rng](double total, double minimum) {
      const double lo = minimum;
      const double hi = total - minimum;
      return lo + static_cast<double>(rng.next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    };
    const double left_in = split_count(item.n_in, 1.0);
    const double right_in = item.n_in - left_in;
    const double left_oob = item.n_oob > 0.0 ? split_count(item.n_oob, 0.0) : 0.0;
    const double right_oob = item.n_oob - left_oob;

    auto split_class = [&rng](double count1, double left_total, double total) {
      const double lo = std::max(0.0, count1 - (total - left_total));
      const double hi = std::min(left_total, count1);
      return lo + static_cast<double>(rng.next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    };
    const double left_in1 = split_class(item.in1, left_in, item.n_in);
    const double left_oob1 = item.n_oob > 0.0 ? split_class(item.oob1, left_oob, item.n_oob) : 0.0;

    const int left_id = static_cast<int>(tree.nodes.size());
    const int right_id = left_id + 1;
    node.split = SplitRecord{feature, threshold, left_id, right_id};
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back({right_id, right_in, right_oob, item.in1 - left_in1,
                     item.oob1 - left_oob1, feature});
    stack.push_back({left_id, left_in, left_oob, left_in1, left_oob1, feature});
    ++depth_guess;
  }
  (void)depth_guess;
  std::vector<int> depth(tree.nodes.size(), 0);
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    if (tree.nodes[id].is_leaf()) continue;
    const int d = depth[id] + 1;
    depth[static_cast<std::size_t>(tree.nodes[id].split->left)] = d;
    depth[static_cast<std::size_t>(tree.nodes[id].split->right)] = d;
    tree.max_depth_reached = std::max(tree.max_depth_reached, d);
  }
  tree.inbag_multiplicity.assign(1, 1);  // not used by attribution code
  return tree;
}

}  // namespace oobforest::testing
