#include "oobforest/serialize.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oobforest/errors.hpp"

namespace oobforest {

using nlohmann::json;

std::uint64_t config_hash(const std::map<std::string, std::string>& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (const char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [key, value] : config) {
    mix(key);
    mix(value);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

namespace {

// shortest round-trip representation
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[32];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    std::sscanf(probe, "%lf", &back);
    if (back == v) return std::string(probe);
  }
  return std::string(buf);
}

void write_meta_lines(std::ostream& out, const OutputMeta& meta) {
  out << "# oobforest " << kToolVersion << "\n";
  out << "# seed=" << meta.seed << "\n";
  out << "# config_hash=" << meta.hash() << "\n";
  for (const auto& [key, value] : meta.config) {
    out << "# " << key << "=" << value << "\n";
  }
}

json meta_json(const OutputMeta& meta) {
  json m;
  m["tool_version"] = kToolVersion;
  m["seed"] = meta.seed;
  m["config_hash"] = meta.hash();
  m["config"] = meta.config;
  return m;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (const char c : s) {
    if (c == '"') q += "\"\"";
    else q += c;
  }
  q += "\"";
  return q;
}

}  // namespace

std::string forest_to_json(const Forest& forest) {
  json j;
  j["format"] = "oobforest-forest";
  j["format_version"] = 1;
  j["params"] = {{"n_trees", forest.params.n_trees},
                 {"mtry", forest.params.mtry},
                 {"min_leaf", forest.params.min_leaf},
                 {"seed", forest.params.seed},
                 {"subsample_ratio", forest.params.subsample_ratio}};
  if (forest.params.max_depth) {
    j["params"]["max_depth"] = *forest.params.max_depth;
  } else {
    j["params"]["max_depth"] = nullptr;
  }
  j["n_classes"] = forest.n_classes;
  j["n_features"] = forest.p;
  j["column_names"] = forest.column_names;

  json trees = json::array();
  for (const Tree& tree : forest.trees) {
    json t;
    t["inbag_multiplicity"] = tree.inbag_multiplicity;
    t["max_depth_reached"] = tree.max_depth_reached;
    json nodes = json::array();
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      const TreeNode& node = tree.nodes[id];
      json n;
      n["id"] = id;
      if (node.is_leaf()) {
        n["feature"] = nullptr;
        n["threshold"] = nullptr;
        n["children"] = nullptr;
      } else {
        n["feature"] = node.split->feature;
        n["threshold"] = node.split->threshold;
        n["children"] = {node.split->left, node.split->right};
      }
      n["n_in"] = node.stats.n_in;
      n["n_oob"] = node.stats.n_oob;
      n["class_counts_in"] = node.stats.class_counts_in;
      n["class_counts_oob"] = node.stats.class_counts_oob;
      nodes.push_back(std::move(n));
    }
    t["nodes"] = std::move(nodes);
    trees.push_back(std::move(t));
  }
  j["trees"] = std::move(trees);
  return j.dump(2);
}

Forest forest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("forest JSON parse error: ") + e.what());
  }
  if (j.value("format", "") != "oobforest-forest") {
    throw DataError("not an oobforest forest file");
  }
  if (j.value("format_version", 0) != 1) {
    throw DataError("unsupported forest format version");
  }
  Forest forest;
  const json& params = j.at("params");
  forest.params.n_trees = params.at("n_trees").get<int>();
  forest.params.mtry = params.at("mtry").get<int>();
  forest.params.min_leaf = params.at("min_leaf").get<int>();
  forest.params.seed = params.at("seed").get<std::uint64_t>();
  forest.params.subsample_ratio = params.at("subsample_ratio").get<double>();
  if (!params.at("max_depth").is_null()) {
    forest.params.max_depth = params.at("max_depth").get<int>();
  }
  forest.n_classes = j.at("n_classes").get<int>();
  forest.p = j.at("n_features").get<int>();
  forest.column_names = j.at("column_names").get<std::vector<std::string>>();

  for (const json& t : j.at("trees")) {
    Tree tree;
    tree.inbag_multiplicity = t.at("inbag_multiplicity").get<std::vector<int>>();
    tree.max_depth_reached = t.value("max_depth_reached", 0);
    for (std::size_t i = 0; i < tree.inbag_multiplicity.size(); ++i) {
      if (tree.inbag_multiplicity[i] == 0) tree.oob_indices.push_back(static_cast<int>(i));
    }
    tree.nodes.resize(t.at("nodes").size());
    for (const json& n : t.at("nodes")) {
      const std::size_t id = n.at("id").get<std::size_t>();
      if (id >= tree.nodes.size()) throw DataError("node id out of range");
      TreeNode& node = tree.nodes[id];
      if (!n.at("feature").is_null()) {
        SplitRecord s;
        s.feature = n.at("feature").get<int>();
        s.threshold = n.at("threshold").get<double>();
        const auto children = n.at("children").get<std::vector<int>>();
        if (children.size() != 2) throw DataError("children must have 2 entries");
        s.left = children[0];
        s.right = children[1];
        node.split = s;
      }
      node.stats.n_in = n.at("n_in").get<double>();
      node.stats.n_oob = n.at("n_oob").get<double>();
      node.stats.class_counts_in = n.at("class_counts_in").get<std::vector<double>>();
      node.stats.class_counts_oob = n.at("class_counts_oob").get<std::vector<double>>();
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

void save_forest(const Forest& forest, const std::string& path) {
  auto out = open_out(path);
  out << forest_to_json(forest) << "\n";
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return forest_from_json(buf.str());
}

void write_importance_csv(const ImportanceReport& report, const std::string& path,
                          const OutputMeta& meta) {
  auto out = open_out(path);
  write_meta_lines(out, meta);
  out << "feature,method,score\n";
  for (std::size_t k = 0; k < report.scores.size(); ++k) {
    out << csv_quote(report.feature_names[k]) << "," << csv_quote(report.method)
        << "," << fmt(report.scores[k]) << "\n";
  }
}

void write_importance_json(const ImportanceReport& report, const std::string& path,
                           const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["method"] = report.method;
  j["config"] = report.config;
  j["features"] = report.feature_names;
  j["scores"] = report.scores;
  if (!report.per_tree.empty()) j["per_tree"] = report.per_tree;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

namespace {

void attribution_rows(const AttributionMatrix& attr, SampleSplit split,
                      const char* name, std::ostream& out) {
  for (std::size_t i = 0; i < attr.n; ++i) {
    if (attr.split_count(i, split) == 0) continue;
    for (std::size_t k = 0; k < attr.p; ++k) {
      out << attr.sample_ids[i] << "," << csv_quote(attr.feature_names[k]) << ","
          << fmt(attr.value(i, k, split)) << "," << name << "\n";
    }
  }
}

}  // namespace

void write_attributions_csv(const AttributionMatrix& attr, const std::string& path,
                            const OutputMeta& meta) {
  auto out = open_out(path);
  write_meta_lines(out, meta);
  out << "# base_value=" << fmt(attr.base_all) << "\n";
  out << "sample_id,feature,value,membership\n";
  attribution_rows(attr, SampleSplit::kAll, "all", out);
  attribution_rows(attr, SampleSplit::kInbag, "inbag", out);
  attribution_rows(attr, SampleSplit::kOob, "oob", out);
}

void write_attributions_json(const AttributionMatrix& attr, const std::string& path,
                             const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["kind"] = attr.kind == AttributionKind::kShap ? "shap" : "cfc";
  j["cover"] = attr.cover == CoverSource::kOob ? "oob" : "inbag";
  j["features"] = attr.feature_names;
  j["sample_ids"] = attr.sample_ids;
  j["base_value"] = attr.base_all;
  j["trees_used"] = attr.trees_used;

  auto matrix = [&](const std::vector<double>& flat) {
    json rows = json::array();
    for (std::size_t i = 0; i < attr.n; ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < attr.p; ++k) row.push_back(flat[i * attr.p + k]);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["values"] = matrix(attr.mean_all);
  j["values_inbag"] = matrix(attr.mean_inbag);
  j["values_oob"] = matrix(attr.mean_oob);
  j["inbag_tree_count"] = attr.inbag_tree_count;
  j["oob_tree_count"] = attr.oob_tree_count;
  j["base_inbag"] = attr.base_inbag;
  j["base_oob"] = attr.base_oob;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_study_records_csv(const std::vector<StudyRecord>& records,
                             const std::string& path, const OutputMeta& meta) {
  auto out = open_out(path);
  write_meta_lines(out, meta);
  out << "rep,method,feature,score\n";
  for (const StudyRecord& r : records) {
    out << r.rep << "," << csv_quote(r.method) << "," << csv_quote(r.feature)
        << "," << fmt(r.score) << "\n";
  }
}

std::string noisy_summary_json(const NoisyResult& result, const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["study"] = "noisy";
  j["methods"] = result.methods;
  json per_method;
  for (const auto& method : result.methods) {
    per_method[method] = {{"auc_mean", result.auc_mean.at(method)},
                          {"auc_se", result.auc_se.at(method)},
                          {"auc_per_rep", result.auc_per_rep.at(method)}};
  }
  j["auc"] = std::move(per_method);
  return j.dump(2);
}

std::string null_power_summary_json(const NullPowerResult& result,
                                    const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["study"] = result.config.study_case == StroblConfig::Case::kNull ? "null" : "power";
  j["methods"] = result.methods;
  j["features"] = result.feature_names;
  json dists;
  for (const auto& method : result.methods) {
    json rows = json::array();
    const auto& per_feature = result.distributions.at(method);
    for (std::size_t k = 0; k < per_feature.size(); ++k) {
      const FeatureDistribution& d = per_feature[k];
      rows.push_back({{"feature", result.feature_names[k]},
                      {"median", d.median},
                      {"q25", d.q25},
                      {"q75", d.q75},
                      {"mean", d.mean},
                      {"sd", d.sd},
                      {"se_median", d.se_median}});
    }
    dists[method] = {{"distributions", std::move(rows)},
                     {"rank1_fraction", result.rank1_fraction.at(method)}};
  }
  j["results"] = std::move(dists);
  return j.dump(2);
}

std::string titanic_summary_json(const TitanicResult& result, const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["study"] = "titanic";
  j["methods"] = result.methods;
  j["features"] = result.feature_names;
  json per_method;
  for (const auto& method : result.methods) {
    per_method[method] = {{"mean", result.mean.at(method)},
                          {"se", result.se.at(method)}};
  }
  j["scores"] = std::move(per_method);
  return j.dump(2);
}

std::string split_bias_summary_json(const SplitBiasResult& result,
                                    const OutputMeta& meta) {
  json j;
  j["meta"] = meta_json(meta);
  j["study"] = "splitbias";
  json rows = json::array();
  for (const SplitBiasRow& r : result.rows) {
    rows.push_back({{"node_size", r.node_size},
                    {"uncorrected_mean", r.uncorrected_mean},
                    {"uncorrected_se", r.uncorrected_se},
                    {"corrected_mean", r.corrected_mean},
                    {"corrected_se", r.corrected_se},
                    {"analytic_target", r.analytic_target}});
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (text.empty() || text.back() != '\n') out << "\n";
}

}  // namespace oobforest
