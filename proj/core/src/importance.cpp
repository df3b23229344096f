#include "oobforest/importance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oobforest/errors.hpp"

namespace oobforest {

void PGConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("pg: alpha must be in [0, 1]");
  if (lambda < 0.0) throw ConfigError("pg: lambda must be >= 0");
  if (bias_correct && resolved_min_oob() < 2) {
    throw ConfigError("pg: bias correction needs min_oob >= 2");
  }
}

std::string PGConfig::label() const {
  std::ostringstream os;
  os << "pg:" << alpha << ":" << lambda;
  if (bias_correct) os << ":corrected";
  return os.str();
}

double penalized_impurity(const NodeStats& stats, const PGConfig& config,
                          OobStatsSource source) {
  const std::size_t n_classes = stats.class_counts_in.size();
  const bool needs_oob =
      source == OobStatsSource::kOob && (config.alpha > 0.0 || config.lambda > 0.0);
  if (needs_oob && stats.n_oob < std::max(1, config.resolved_min_oob())) {
    throw DataError("penalized_impurity: node has too few OOB samples");
  }

  double g_in = 0.0, g_oob = 0.0, penalty = 0.0;
  for (std::size_t d = 0; d < n_classes; ++d) {
    const double p_in = stats.mu_in(static_cast<int>(d));
    g_in += p_in * (1.0 - p_in);
    if (config.alpha > 0.0 || config.lambda > 0.0) {
      const double p_oob = source == OobStatsSource::kOob
                               ? stats.mu_oob(static_cast<int>(d))
                               : p_in;
      g_oob += p_oob * (1.0 - p_oob);
      const double diff = p_oob - p_in;
      penalty += diff * diff;
    }
  }
  const double c = config.bias_correct && source == OobStatsSource::kOob
                       ? stats.n_oob / (stats.n_oob - 1.0)
                       : 1.0;
  return config.alpha * c * g_oob + (1.0 - config.alpha) * g_in +
         0.5 * config.lambda * penalty;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

ImportanceReport make_report(const Forest& forest, const std::string& method) {
  ImportanceReport report;
  report.method = method;
  report.feature_names = forest.column_names;
  if (report.feature_names.size() != static_cast<std::size_t>(forest.p)) {
    report.feature_names.resize(static_cast<std::size_t>(forest.p));
    for (int j = 0; j < forest.p; ++j) {
      if (report.feature_names[static_cast<std::size_t>(j)].empty()) {
        report.feature_names[static_cast<std::size_t>(j)] = "x" + std::to_string(j);
      }
    }
  }
  report.per_tree.assign(forest.trees.size(),
                         std::vector<double>(static_cast<std::size_t>(forest.p), 0.0));
  return report;
}

void average_per_tree(ImportanceReport& report, int p) {
  report.scores.assign(static_cast<std::size_t>(p), 0.0);
  for (const auto& row : report.per_tree) {
    for (int j = 0; j < p; ++j) report.scores[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
  }
  const double n = static_cast<double>(report.per_tree.size());
  for (double& v : report.scores) v /= n;
}

}  // namespace

ImportanceReport pg_importance(const Forest& forest, const PGConfig& config,
                               OobStatsSource source) {
  config.validate();
  ImportanceReport report = make_report(forest, config.label());
  const bool uses_oob =
      source == OobStatsSource::kOob && (config.alpha > 0.0 || config.lambda > 0.0);
  const int min_oob = uses_oob ? std::max(1, config.resolved_min_oob()) : 0;
  std::size_t skipped = 0;

  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const Tree& tree = forest.trees[t];
    const double inbag_total = tree.nodes[0].stats.n_in;
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const TreeNode& left = tree.nodes[static_cast<std::size_t>(node.split->left)];
      const TreeNode& right = tree.nodes[static_cast<std::size_t>(node.split->right)];
      if (uses_oob && (node.stats.n_oob < min_oob || left.stats.n_oob < min_oob ||
                       right.stats.n_oob < min_oob)) {
        ++skipped;
        continue;
      }
      const double pg_t = penalized_impurity(node.stats, config, source);
      const double pg_l = penalized_impurity(left.stats, config, source);
      const double pg_r = penalized_impurity(right.stats, config, source);
      const double n_t = node.stats.n_in;
      const double decrease =
          pg_t - (left.stats.n_in / n_t) * pg_l - (right.stats.n_in / n_t) * pg_r;
      report.per_tree[t][static_cast<std::size_t>(node.split->feature)] +=
          (n_t / inbag_total) * decrease;
    }
  }
  average_per_tree(report, forest.p);
  report.config["alpha"] = fmt_double(config.alpha);
  report.config["lambda"] = fmt_double(config.lambda);
  report.config["bias_correct"] = config.bias_correct ? "true" : "false";
  report.config["min_oob"] = std::to_string(min_oob);
  report.config["skipped_nodes"] = std::to_string(skipped);
  if (source == OobStatsSource::kInbagSubstituted) report.config["oob_source"] = "inbag";
  return report;
}

ImportanceReport mdi(const Forest& forest) {
  PGConfig config;
  config.alpha = 0.0;
  config.lambda = 0.0;
  config.min_oob = 0;
  ImportanceReport report = pg_importance(forest, config);
  report.method = "mdi";
  report.config.clear();
  return report;
}

ImportanceReport mdi_oob(const Forest& forest, const Dataset& data) {
  if (forest.n_classes != 2) throw DataError("mdi_oob requires binary labels");
  ImportanceReport report = make_report(forest, "mdi_oob");

  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const Tree& tree = forest.trees[t];
    // sum over OOB samples in each node of (y - mu_in(node))^2
    std::vector<double> ssd(tree.nodes.size(), 0.0);
    for (const int i : tree.oob_indices) {
      const double* x = data.row(static_cast<std::size_t>(i));
      const double y = static_cast<double>(data.labels[static_cast<std::size_t>(i)]);
      int id = 0;
      for (;;) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
        const double dev = y - node.stats.mu_in(1);
        ssd[static_cast<std::size_t>(id)] += dev * dev;
        if (node.is_leaf()) break;
        id = tree.step(id, x);
      }
    }
    const double inbag_total = tree.nodes[0].stats.n_in;
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const TreeNode& left = tree.nodes[static_cast<std::size_t>(node.split->left)];
      const TreeNode& right = tree.nodes[static_cast<std::size_t>(node.split->right)];
      if (node.stats.n_oob < 1 || left.stats.n_oob < 1 || right.stats.n_oob < 1) {
        continue;
      }
      auto mean_sq_dev = [&](const TreeNode& nd) {
        return ssd[static_cast<std::size_t>(&nd - tree.nodes.data())] / nd.stats.n_oob;
      };
      const double n_t = node.stats.n_in;
      const double decrease = mean_sq_dev(node) -
                              (left.stats.n_in / n_t) * mean_sq_dev(left) -
                              (right.stats.n_in / n_t) * mean_sq_dev(right);
      report.per_tree[t][static_cast<std::size_t>(node.split->feature)] +=
          (n_t / inbag_total) * decrease;
    }
  }
  average_per_tree(report, forest.p);
  return report;
}

namespace {

int tree_predict(const Tree& tree, const double* x) {
  const NodeStats& s = tree.nodes[static_cast<std::size_t>(tree.leaf_for(x))].stats;
  int best = 0;
  for (std::size_t d = 1; d < s.class_counts_in.size(); ++d) {
    if (s.class_counts_in[d] > s.class_counts_in[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(d);
    }
  }
  return best;
}

}  // namespace

ImportanceReport mda_permutation(const Forest& forest, const Dataset& data,
                                 int n_permutations, RngStream& rng) {
  if (n_permutations < 1) throw ConfigError("mda: n_permutations must be >= 1");
  ImportanceReport report = make_report(forest, "mda");
  const std::uint64_t base_seed = rng.next_u64();
  std::size_t trees_used = 0;

  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const Tree& tree = forest.trees[t];
    const std::vector<int>& oob = tree.oob_indices;
    if (oob.empty()) continue;
    ++trees_used;

    const double n_oob = static_cast<double>(oob.size());
    double correct = 0.0;
    for (const int i : oob) {
      if (tree_predict(tree, data.row(static_cast<std::size_t>(i))) ==
          data.labels[static_cast<std::size_t>(i)]) {
        correct += 1.0;
      }
    }
    const double baseline = correct / n_oob;

    std::vector<double> x_row(data.p);
    std::vector<double> column(oob.size());
    for (int k = 0; k < forest.p; ++k) {
      double mean_drop = 0.0;
      for (int rep = 0; rep < n_permutations; ++rep) {
        RngStream perm_rng = RngStream::derive(
            base_seed, (t * static_cast<std::size_t>(forest.p) + static_cast<std::size_t>(k)) *
                               static_cast<std::size_t>(n_permutations) +
                           static_cast<std::size_t>(rep));
        for (std::size_t m = 0; m < oob.size(); ++m) {
          column[m] = data.at(static_cast<std::size_t>(oob[m]), static_cast<std::size_t>(k));
        }
        perm_rng.shuffle(column);
        double perm_correct = 0.0;
        for (std::size_t m = 0; m < oob.size(); ++m) {
          const double* row = data.row(static_cast<std::size_t>(oob[m]));
          std::copy(row, row + data.p, x_row.begin());
          x_row[static_cast<std::size_t>(k)] = column[m];
          if (tree_predict(tree, x_row.data()) == data.labels[static_cast<std::size_t>(oob[m])]) {
            perm_correct += 1.0;
          }
        }
        mean_drop += baseline - perm_correct / n_oob;
      }
      report.per_tree[t][static_cast<std::size_t>(k)] =
          mean_drop / static_cast<double>(n_permutations);
    }
  }

  report.scores.assign(static_cast<std::size_t>(forest.p), 0.0);
  if (trees_used > 0) {
    for (const auto& row : report.per_tree) {
      for (int j = 0; j < forest.p; ++j) {
        report.scores[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
      }
    }
    for (double& v : report.scores) v /= static_cast<double>(trees_used);
  }
  report.config["n_permutations"] = std::to_string(n_permutations);
  report.config["trees_used"] = std::to_string(trees_used);
  return report;
}

}  // namespace oobforest
