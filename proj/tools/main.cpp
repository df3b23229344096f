// oobforest command-line tool: fit forests and emit importance reports,
// local attributions, and the simulation studies as CSV/JSON files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oobforest/dataset.hpp"
#include "oobforest/errors.hpp"
#include "oobforest/experiments.hpp"
#include "oobforest/explain.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/importance.hpp"
#include "oobforest/serialize.hpp"

namespace {

using namespace oobforest;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct ForestFlags {
  int trees = 100;
  int mtry = 0;
  int min_leaf = 1;
  int max_depth = -1;
  double subsample = 0.0;

  ForestParams params(std::uint64_t seed) const {
    ForestParams p;
    p.n_trees = trees;
    p.mtry = mtry;
    p.min_leaf = min_leaf;
    if (max_depth >= 0) p.max_depth = max_depth;
    p.subsample_ratio = subsample;
    p.seed = seed;
    return p;
  }

  void echo(std::map<std::string, std::string>& config) const {
    config["trees"] = std::to_string(trees);
    config["mtry"] = std::to_string(mtry);
    config["min_leaf"] = std::to_string(min_leaf);
    if (max_depth >= 0) config["max_depth"] = std::to_string(max_depth);
    if (subsample > 0.0) config["subsample"] = std::to_string(subsample);
  }
};

void add_forest_flags(CLI::App* cmd, ForestFlags& flags) {
  cmd->add_option("--trees", flags.trees, "Number of trees")->check(CLI::PositiveNumber);
  cmd->add_option("--mtry", flags.mtry, "Features sampled per split (0: sqrt(p))");
  cmd->add_option("--min-leaf", flags.min_leaf, "Minimum inbag samples per leaf");
  cmd->add_option("--max-depth", flags.max_depth, "Depth cap (-1: none)");
  cmd->add_option("--subsample", flags.subsample,
                  "Subsample ratio without replacement (0: bootstrap)");
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

int env_jobs_default() {
  const std::string v = env_or("OOBFOREST_JOBS", "");
  return v.empty() ? 0 : std::stoi(v);
}

// Tracks written files so a failed run leaves no partial outputs behind.
struct OutputTracker {
  std::vector<std::string> paths;
  std::string track(const std::string& path) {
    paths.push_back(path);
    return path;
  }
  void discard_all() {
    for (const auto& p : paths) std::remove(p.c_str());
  }
};

std::string sanitize(const std::string& method) {
  std::string s = method;
  for (char& c : s) {
    if (c == ':' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

// --- method mini-language: mdi | mda | mdi_oob | cfc | shap[_in|_oob]
//     | wshap[_in|_oob] | pg:<alpha>:<lambda>[:corrected] ---

struct MethodSpec {
  std::string name;  // as given
  enum class Kind { kMdi, kMda, kMdiOob, kCfc, kShap, kWShap, kPg } kind;
  SampleSplit split = SampleSplit::kAll;
  CoverSource cover = CoverSource::kInbag;
  PGConfig pg;
};

MethodSpec parse_method(const std::string& token) {
  MethodSpec m;
  m.name = token;
  if (token == "mdi") { m.kind = MethodSpec::Kind::kMdi; return m; }
  if (token == "mda") { m.kind = MethodSpec::Kind::kMda; return m; }
  if (token == "mdi_oob") { m.kind = MethodSpec::Kind::kMdiOob; return m; }
  if (token == "cfc") { m.kind = MethodSpec::Kind::kCfc; return m; }
  if (token == "shap" || token == "shap_in" || token == "shap_oob" ||
      token == "wshap" || token == "wshap_in" || token == "wshap_oob") {
    m.kind = token[0] == 'w' ? MethodSpec::Kind::kWShap : MethodSpec::Kind::kShap;
    if (token.ends_with("_in")) {
      m.split = SampleSplit::kInbag;
      m.cover = CoverSource::kInbag;
    } else if (token.ends_with("_oob")) {
      m.split = SampleSplit::kOob;
      m.cover = CoverSource::kOob;
    }
    return m;
  }
  if (token.rfind("pg:", 0) == 0) {
    m.kind = MethodSpec::Kind::kPg;
    std::vector<std::string> parts;
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() < 3 || parts.size() > 4) {
      throw ConfigError("bad pg method '" + token + "' (want pg:<alpha>:<lambda>[:corrected])");
    }
    try {
      m.pg.alpha = std::stod(parts[1]);
      m.pg.lambda = std::stod(parts[2]);
    } catch (...) {
      throw ConfigError("bad pg method '" + token + "': alpha/lambda must be numbers");
    }
    if (parts.size() == 4) {
      if (parts[3] != "corrected") {
        throw ConfigError("bad pg method '" + token + "': unknown suffix '" + parts[3] + "'");
      }
      m.pg.bias_correct = true;
    }
    m.pg.validate();
    return m;
  }
  throw ConfigError("unknown method '" + token + "'");
}

std::vector<MethodSpec> parse_methods(const std::string& list) {
  std::vector<MethodSpec> out;
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(parse_method(token));
  }
  if (out.empty()) throw ConfigError("no methods given");
  return out;
}

struct DataFlags {
  std::string path;
  std::string label;
  std::string features;  // comma-separated
  bool titanic = false;

  Dataset load() const {
    if (titanic) return load_titanic(path);
    if (label.empty() || features.empty()) {
      throw ConfigError("--label and --features are required (or use --titanic)");
    }
    std::vector<std::string> cols;
    std::stringstream ss(features);
    std::string c;
    while (std::getline(ss, c, ',')) {
      if (!c.empty()) cols.push_back(c);
    }
    return load_csv(path, label, cols);
  }
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
  cmd->add_option("--data", flags.path, "Input CSV")->required();
  cmd->add_option("--label", flags.label, "Label column name");
  cmd->add_option("--features", flags.features, "Comma-separated feature columns");
  cmd->add_flag("--titanic", flags.titanic,
                "Use the Titanic schema (Survived; PassengerId,Age,Sex,Pclass)");
}

// lazily computed SHAP/CFC matrices shared across requested methods
struct AttributionCache {
  const Forest& forest;
  const Dataset& data;
  int jobs;
  std::map<int, AttributionMatrix> shap;  // key: cover
  std::map<int, AttributionMatrix> cfc;

  const AttributionMatrix& get(AttributionKind kind, CoverSource cover) {
    auto& slot = kind == AttributionKind::kShap ? shap : cfc;
    const int key = cover == CoverSource::kOob ? 1 : 0;
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, kind == AttributionKind::kShap
                                 ? shap_forest(forest, data, cover, jobs)
                                 : cfc_forest(forest, data, cover, jobs)).first;
    }
    return it->second;
  }
};

ImportanceReport compute_method(const MethodSpec& m, const Forest& forest,
                                const Dataset& data, std::uint64_t seed,
                                int permutations, AttributionCache& cache,
                                int jobs) {
  switch (m.kind) {
    case MethodSpec::Kind::kMdi:
      return mdi(forest);
    case MethodSpec::Kind::kMda: {
      RngStream rng = RngStream::derive(seed ^ 0xdeadbeefULL, 0);
      return mda_permutation(forest, data, permutations, rng);
    }
    case MethodSpec::Kind::kMdiOob:
      return mdi_oob(forest, data);
    case MethodSpec::Kind::kCfc:
      return global_cfc(cache.get(AttributionKind::kCfc, CoverSource::kInbag));
    case MethodSpec::Kind::kShap: {
      ImportanceReport r = mean_abs_attribution(cache.get(AttributionKind::kShap, m.cover), m.split);
      r.method = m.name;
      return r;
    }
    case MethodSpec::Kind::kWShap: {
      ImportanceReport r =
          weighted_shap(cache.get(AttributionKind::kShap, m.cover), data.labels, m.split);
      r.method = m.name;
      return r;
    }
    case MethodSpec::Kind::kPg:
      return pg_importance(forest, m.pg);
  }
  throw ConfigError("unreachable method kind");
  (void)jobs;
}

int cmd_importance(const DataFlags& data_flags, const ForestFlags& forest_flags,
                   const std::string& methods_arg, std::uint64_t seed,
                   const std::string& out_dir, const std::string& format,
                   int permutations, const std::string& save_forest_path, int jobs) {
  const std::vector<MethodSpec> methods = parse_methods(methods_arg);  // before any work

  std::filesystem::create_directories(out_dir);
  const Dataset data = data_flags.load();
  const Forest forest = fit_forest(data, forest_flags.params(seed), jobs);

  OutputTracker outputs;
  try {
    if (!save_forest_path.empty()) {
      save_forest(forest, outputs.track(save_forest_path));
    }
    AttributionCache cache{forest, data, jobs, {}, {}};
    for (const MethodSpec& m : methods) {
      ImportanceReport report = compute_method(m, forest, data, seed, permutations, cache, jobs);
      OutputMeta meta;
      meta.seed = seed;
      meta.config = report.config;
      meta.config["method"] = m.name;
      meta.config["data"] = data_flags.path;
      forest_flags.echo(meta.config);
      const std::string base = out_dir + "/importance_" + sanitize(m.name) + "_" +
                               std::to_string(seed);
      if (format == "json") {
        write_importance_json(report, outputs.track(base + ".json"), meta);
      } else {
        write_importance_csv(report, outputs.track(base + ".csv"), meta);
      }
    }
  } catch (...) {
    outputs.discard_all();
    throw;
  }
  return kExitOk;
}

int cmd_explain(const DataFlags& data_flags, const ForestFlags& forest_flags,
                const std::string& kind_arg, const std::string& cover_arg,
                bool weighted, std::uint64_t seed, const std::string& out_dir,
                const std::string& format, bool verify, int jobs) {
  if (kind_arg != "cfc" && kind_arg != "shap") {
    throw ConfigError("--kind must be cfc or shap");
  }
  if (cover_arg != "inbag" && cover_arg != "oob") {
    throw ConfigError("--cover must be inbag or oob");
  }
  const AttributionKind kind =
      kind_arg == "shap" ? AttributionKind::kShap : AttributionKind::kCfc;
  const CoverSource cover =
      cover_arg == "oob" ? CoverSource::kOob : CoverSource::kInbag;

  std::filesystem::create_directories(out_dir);
  const Dataset data = data_flags.load();
  const Forest forest = fit_forest(data, forest_flags.params(seed), jobs);
  const AttributionMatrix attr = kind == AttributionKind::kShap
                                     ? shap_forest(forest, data, cover, jobs)
                                     : cfc_forest(forest, data, cover, jobs);

  if (verify) {
    // Local accuracy: base + row sum must reproduce the cover-consistent
    // class-1 prediction for every sample.
    std::vector<CoverView> views;
    views.reserve(forest.trees.size());
    std::vector<const Tree*> used;
    for (const Tree& tree : forest.trees) {
      if (cover == CoverSource::kOob && !tree.nodes[0].stats.has_oob()) continue;
      views.push_back(build_cover_view(tree, cover));
      used.push_back(&tree);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
      double pred = 0.0;
      for (std::size_t t = 0; t < used.size(); ++t) {
        pred += predict_value(*used[t], views[t], data.row(i));
      }
      pred /= static_cast<double>(used.size());
      double total = attr.base_all;
      for (std::size_t k = 0; k < data.p; ++k) {
        total += attr.value(i, k, SampleSplit::kAll);
      }
      worst = std::max(worst, std::abs(total - pred));
    }
    std::cout << "local accuracy: max |base + sum - prediction| = " << worst << "\n";
    if (worst > 1e-9) throw std::runtime_error("local accuracy check failed");
  }

  OutputTracker outputs;
  try {
    OutputMeta meta;
    meta.seed = seed;
    meta.config["kind"] = kind_arg;
    meta.config["cover"] = cover_arg;
    meta.config["data"] = data_flags.path;
    forest_flags.echo(meta.config);
    const std::string base =
        out_dir + "/" + kind_arg + "_" + cover_arg + "_" + std::to_string(seed);
    if (format == "json") {
      write_attributions_json(attr, outputs.track(base + ".json"), meta);
    } else {
      write_attributions_csv(attr, outputs.track(base + ".csv"), meta);
    }
    if (weighted) {
      if (kind != AttributionKind::kShap) {
        throw ConfigError("--weighted applies to --kind shap");
      }
      const SampleSplit split =
          cover == CoverSource::kOob ? SampleSplit::kOob : SampleSplit::kInbag;
      ImportanceReport report = weighted_shap(attr, data.labels, split);
      OutputMeta wmeta = meta;
      wmeta.config.insert(report.config.begin(), report.config.end());
      const std::string wbase = base + "_weighted";
      if (format == "json") {
        write_importance_json(report, outputs.track(wbase + ".json"), wmeta);
      } else {
        write_importance_csv(report, outputs.track(wbase + ".csv"), wmeta);
      }
    }
  } catch (...) {
    outputs.discard_all();
    throw;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& study, int reps, std::uint64_t seed,
                 const std::string& sizes_arg, double label_p,
                 const std::string& data_path, int n_override, int seeds,
                 bool shuffle_id, bool fixed_relevant, int permutations,
                 const ForestFlags& forest_flags, bool forest_flags_given,
                 const std::string& out_dir, int jobs) {
  std::filesystem::create_directories(out_dir);
  OutputTracker outputs;
  const std::string stem = out_dir + "/" + study + "_" + std::to_string(seed);

  OutputMeta meta;
  meta.seed = seed;
  meta.config["study"] = study;
  meta.config["reps"] = std::to_string(reps);

  try {
    if (study == "null" || study == "power") {
      StroblConfig config;
      config.study_case =
          study == "null" ? StroblConfig::Case::kNull : StroblConfig::Case::kPower;
      config.reps = reps;
      if (n_override > 0) config.n = n_override;
      if (forest_flags_given) config.forest = forest_flags.params(0);
      meta.config["n"] = std::to_string(config.n);
      const NullPowerResult result = run_null_power(config, seed, jobs);
      write_study_records_csv(result.records, outputs.track(stem + ".csv"), meta);
      write_text(outputs.track(stem + "_summary.json"),
                 null_power_summary_json(result, meta));
    } else if (study == "noisy") {
      NoisyConfig config;
      config.reps = reps;
      config.resample_relevant = !fixed_relevant;
      if (n_override > 0) config.n = n_override;
      if (forest_flags_given) config.forest = forest_flags.params(0);
      meta.config["n"] = std::to_string(config.n);
      meta.config["resample_relevant"] = config.resample_relevant ? "true" : "false";
      const NoisyResult result = run_noisy(config, seed, jobs);
      write_study_records_csv(result.records, outputs.track(stem + ".csv"), meta);
      write_text(outputs.track(stem + "_summary.json"), noisy_summary_json(result, meta));
    } else if (study == "splitbias") {
      SplitBiasConfig config;
      config.reps = reps;
      config.label_p = label_p;
      config.seed = seed;
      config.keep_records = true;
      if (!sizes_arg.empty()) {
        config.node_sizes.clear();
        std::stringstream ss(sizes_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          if (!tok.empty()) config.node_sizes.push_back(std::stoi(tok));
        }
      }
      meta.config["label_p"] = std::to_string(label_p);
      meta.config["sizes"] = sizes_arg.empty() ? "10,50,200" : sizes_arg;
      const SplitBiasResult result = run_null_split_bias(config);
      write_study_records_csv(result.records, outputs.track(stem + ".csv"), meta);
      write_text(outputs.track(stem + "_summary.json"),
                 split_bias_summary_json(result, meta));
    } else if (study == "titanic") {
      if (data_path.empty()) throw ConfigError("simulate titanic needs --data");
      TitanicConfig config;
      config.path = data_path;
      config.seed = seed;
      config.n_seeds = seeds;
      config.shuffle_id = shuffle_id;
      config.mda_permutations = permutations;
      if (forest_flags_given) config.forest = forest_flags.params(0);
      meta.config["data"] = data_path;
      meta.config["seeds"] = std::to_string(seeds);
      const TitanicResult result = run_titanic(config, jobs);
      write_study_records_csv(result.records, outputs.track(stem + ".csv"), meta);
      write_text(outputs.track(stem + "_summary.json"), titanic_summary_json(result, meta));
    } else {
      throw ConfigError("unknown study '" + study +
                        "' (want null|power|noisy|splitbias|titanic)");
    }
  } catch (...) {
    outputs.discard_all();
    throw;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oobforest: random forests with inbag/OOB bookkeeping and "
               "debiased feature importances"};
  app.require_subcommand(1);

  // importance
  auto* imp = app.add_subcommand("importance", "Fit a forest and write importance reports");
  DataFlags imp_data;
  ForestFlags imp_forest;
  std::string imp_methods = "mdi";
  std::uint64_t imp_seed = 0;
  std::string imp_out = env_or("OOBFOREST_OUT", ".");
  std::string imp_format = "csv";
  std::string imp_save_forest;
  int imp_permutations = 1;
  int imp_jobs = env_jobs_default();
  add_data_flags(imp, imp_data);
  add_forest_flags(imp, imp_forest);
  imp->add_option("--methods", imp_methods,
                  "Comma list: mdi,mda,mdi_oob,cfc,shap[_in|_oob],wshap[_in|_oob],"
                  "pg:<alpha>:<lambda>[:corrected]");
  imp->add_option("--seed", imp_seed, "Master RNG seed");
  imp->add_option("--out", imp_out, "Output directory");
  imp->add_option("--format", imp_format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  imp->add_option("--permutations", imp_permutations, "MDA permutation repeats");
  imp->add_option("--save-forest", imp_save_forest, "Also dump the fitted forest (JSON)");
  imp->add_option("--jobs", imp_jobs, "Worker threads (0: all cores)");

  // explain
  auto* exp = app.add_subcommand("explain", "Fit a forest and write local attributions");
  DataFlags exp_data;
  ForestFlags exp_forest;
  std::string exp_kind = "cfc";
  std::string exp_cover = "inbag";
  bool exp_weighted = false;
  bool exp_verify = false;
  std::uint64_t exp_seed = 0;
  std::string exp_out = env_or("OOBFOREST_OUT", ".");
  std::string exp_format = "csv";
  int exp_jobs = env_jobs_default();
  add_data_flags(exp, exp_data);
  add_forest_flags(exp, exp_forest);
  exp->add_option("--kind", exp_kind, "cfc or shap");
  exp->add_option("--cover", exp_cover, "inbag or oob");
  exp->add_flag("--weighted", exp_weighted, "Also write the y-weighted SHAP report");
  exp->add_flag("--verify", exp_verify, "Check local accuracy before writing");
  exp->add_option("--seed", exp_seed, "Master RNG seed");
  exp->add_option("--out", exp_out, "Output directory");
  exp->add_option("--format", exp_format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  exp->add_option("--jobs", exp_jobs, "Worker threads (0: all cores)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a reproduction study");
  std::string sim_study;
  int sim_reps = 100;
  std::uint64_t sim_seed = 0;
  std::string sim_sizes;
  double sim_label_p = 0.5;
  std::string sim_data;
  int sim_n = 0;
  int sim_seeds = 10;
  bool sim_shuffle_id = false;
  bool sim_fixed_relevant = false;
  int sim_permutations = 1;
  ForestFlags sim_forest;
  std::string sim_out = env_or("OOBFOREST_OUT", ".");
  int sim_jobs = env_jobs_default();
  sim->add_option("study", sim_study, "null|power|noisy|splitbias|titanic")->required();
  sim->add_option("--reps", sim_reps, "Repetitions");
  sim->add_option("--seed", sim_seed, "Master RNG seed");
  sim->add_option("--sizes", sim_sizes, "splitbias node sizes, e.g. 10,50,200");
  sim->add_option("--label-p", sim_label_p, "splitbias Bernoulli class probability");
  sim->add_option("--data", sim_data, "Titanic CSV (for study=titanic)");
  sim->add_option("--n", sim_n, "Sample-size override for null/power/noisy");
  sim->add_option("--seeds", sim_seeds, "Seed count for the titanic study");
  sim->add_flag("--shuffle-id", sim_shuffle_id, "Shuffle PassengerId before fitting");
  sim->add_flag("--fixed-relevant", sim_fixed_relevant,
                "Keep one relevant set across noisy repetitions");
  sim->add_option("--permutations", sim_permutations, "MDA permutation repeats");
  add_forest_flags(sim, sim_forest);
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_option("--jobs", sim_jobs, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (imp->parsed()) {
      return cmd_importance(imp_data, imp_forest, imp_methods, imp_seed, imp_out,
                            imp_format, imp_permutations, imp_save_forest, imp_jobs);
    }
    if (exp->parsed()) {
      return cmd_explain(exp_data, exp_forest, exp_kind, exp_cover, exp_weighted,
                         exp_seed, exp_out, exp_format, exp_verify, exp_jobs);
    }
    if (sim->parsed()) {
      const bool forest_given =
          sim->count("--trees") || sim->count("--mtry") || sim->count("--min-leaf") ||
          sim->count("--max-depth") || sim->count("--subsample");
      return cmd_simulate(sim_study, sim_reps, sim_seed, sim_sizes, sim_label_p,
                          sim_data, sim_n, sim_seeds, sim_shuffle_id,
                          sim_fixed_relevant, sim_permutations, sim_forest,
                          forest_given, sim_out, sim_jobs);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
