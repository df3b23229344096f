#include "oobforest/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "oobforest/errors.hpp"

namespace oobforest {
namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double se_of(const std::vector<double>& v) {
  return sd_of(v) / std::sqrt(static_cast<double>(v.size()));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

FeatureDistribution summarize(std::vector<double> values) {
  FeatureDistribution d;
  d.mean = mean_of(values);
  d.sd = sd_of(values);
  d.se_median = 1.2533 * d.sd / std::sqrt(static_cast<double>(values.size()));
  std::sort(values.begin(), values.end());
  d.median = quantile_sorted(values, 0.5);
  d.q25 = quantile_sorted(values, 0.25);
  d.q75 = quantile_sorted(values, 0.75);
  return d;
}

}  // namespace

// ----- Strobl null/power -----

void StroblConfig::validate() const {
  if (n < 20) throw ConfigError("strobl: n must be >= 20");
  if (reps < 1) throw ConfigError("strobl: reps must be >= 1");
}

Dataset gen_strobl(const StroblConfig& config, RngStream& rng) {
  config.validate();
  const int cats[4] = {2, 4, 10, 20};
  const std::size_t n = static_cast<std::size_t>(config.n);
  std::vector<std::vector<double>> columns(5, std::vector<double>(n));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    columns[0][i] = rng.next_unit();
    for (int j = 0; j < 4; ++j) {
      columns[static_cast<std::size_t>(j + 1)][i] =
          static_cast<double>(rng.next_below(static_cast<std::uint64_t>(cats[j])));
    }
    if (config.study_case == StroblConfig::Case::kNull) {
      labels[i] = rng.next_bernoulli(0.5) ? 1 : 0;
    } else {
      const double p1 = columns[1][i] == 0.0 ? 0.35 : 0.65;
      labels[i] = rng.next_bernoulli(p1) ? 1 : 0;
    }
  }
  return Dataset::from_columns(columns, std::move(labels),
                               {"X1", "X2", "X3", "X4", "X5"});
}

// ----- noisy features -----

void NoisyConfig::validate() const {
  if (n < 1 || p < 1) throw ConfigError("noisy: n and p must be >= 1");
  if (n_relevant < 1 || n_relevant > relevant_pool || relevant_pool > p) {
    throw ConfigError("noisy: need n_relevant <= relevant_pool <= p");
  }
  if (reps < 1) throw ConfigError("noisy: reps must be >= 1");
}

std::pair<Dataset, std::vector<int>> gen_noisy(const NoisyConfig& config,
                                               RngStream& rng) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(config.n);
  const std::size_t p = static_cast<std::size_t>(config.p);

  std::vector<int> relevant =
      rng.sample_without_replacement(config.relevant_pool, config.n_relevant);
  std::sort(relevant.begin(), relevant.end());

  std::vector<std::vector<double>> columns(p, std::vector<double>(n));
  std::vector<int> labels(n);
  std::vector<std::string> names(p);
  for (std::size_t j = 0; j < p; ++j) names[j] = "f" + std::to_string(j + 1);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      // feature j (1-indexed) takes j + 1 distinct values 0..j
      columns[j][i] = static_cast<double>(rng.next_below(j + 2));
    }
    double z = 0.0;
    for (const int j : relevant) {
      z += columns[static_cast<std::size_t>(j)][i] / static_cast<double>(j + 1);
    }
    labels[i] = rng.next_bernoulli(logistic(0.4 * z - 1.0)) ? 1 : 0;
  }
  return {Dataset::from_columns(columns, std::move(labels), names), relevant};
}

double auc(const std::vector<double>& scores, const std::vector<int>& relevance_labels) {
  if (scores.size() != relevance_labels.size()) throw DataError("auc: size mismatch");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (relevance_labels[i] == 1 ? pos : neg).push_back(scores[i]);
  }
  if (pos.empty() || neg.empty()) throw DataError("auc: both classes required");
  double wins = 0.0;
  for (const double a : pos) {
    for (const double b : neg) {
      if (a > b) wins += 1.0;
      else if (a == b) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

namespace {

void push_records(std::vector<StudyRecord>& records, int rep,
                  const std::string& method, const std::vector<std::string>& names,
                  const std::vector<double>& scores) {
  for (std::size_t k = 0; k < scores.size(); ++k) {
    records.push_back({rep, method, names[k], scores[k]});
  }
}

}  // namespace

NoisyResult run_noisy(const NoisyConfig& config, std::uint64_t seed, int jobs) {
  config.validate();
  NoisyResult result;
  result.config = config;
  result.seed = seed;
  result.methods = {"pg:1:0:corrected", "pg:1:0",   "pg:0.5:1:corrected",
                    "pg:0.5:1",         "shap",     "shap_in",
                    "shap_oob",         "wshap",    "wshap_in",
                    "wshap_oob",        "mda",      "mdi"};

  std::vector<int> fixed_relevant;
  for (int rep = 0; rep < config.reps; ++rep) {
    RngStream data_rng = RngStream::derive(seed, 2 * static_cast<std::uint64_t>(rep));
    auto [data, relevant] = gen_noisy(config, data_rng);
    if (!config.resample_relevant) {
      if (rep == 0) {
        fixed_relevant = relevant;
      } else {
        // keep the first repetition's relevant set; relabel outcomes for it
        relevant = fixed_relevant;
        RngStream label_rng = RngStream::derive(seed ^ 0x5bd1e995u, static_cast<std::uint64_t>(rep));
        for (std::size_t i = 0; i < data.n; ++i) {
          double z = 0.0;
          for (const int j : relevant) {
            z += data.at(i, static_cast<std::size_t>(j)) / static_cast<double>(j + 1);
          }
          data.labels[i] = label_rng.next_bernoulli(logistic(0.4 * z - 1.0)) ? 1 : 0;
        }
      }
    }

    ForestParams params = config.forest;
    params.seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    const Forest forest = fit_forest(data, params, jobs);

    std::vector<int> relevance(static_cast<std::size_t>(config.p), 0);
    for (const int j : relevant) relevance[static_cast<std::size_t>(j)] = 1;

    std::map<std::string, std::vector<double>> scores;
    scores["pg:1:0:corrected"] =
        pg_importance(forest, PGConfig{1.0, 0.0, true}).scores;
    scores["pg:1:0"] = pg_importance(forest, PGConfig{1.0, 0.0, false}).scores;
    scores["pg:0.5:1:corrected"] =
        pg_importance(forest, PGConfig{0.5, 1.0, true}).scores;
    scores["pg:0.5:1"] = pg_importance(forest, PGConfig{0.5, 1.0, false}).scores;
    scores["mdi"] = mdi(forest).scores;
    RngStream mda_rng = RngStream::derive(seed ^ 0x9e3779b9u, static_cast<std::uint64_t>(rep));
    scores["mda"] = mda_permutation(forest, data, 1, mda_rng).scores;

    const AttributionMatrix attr_in = shap_forest(forest, data, CoverSource::kInbag, jobs);
    const AttributionMatrix attr_oob = shap_forest(forest, data, CoverSource::kOob, jobs);
    scores["shap"] = mean_abs_attribution(attr_in, SampleSplit::kAll).scores;
    scores["shap_in"] = mean_abs_attribution(attr_in, SampleSplit::kInbag).scores;
    scores["shap_oob"] = mean_abs_attribution(attr_oob, SampleSplit::kOob).scores;
    scores["wshap"] = weighted_shap(attr_in, data.labels, SampleSplit::kAll).scores;
    scores["wshap_in"] = weighted_shap(attr_in, data.labels, SampleSplit::kInbag).scores;
    scores["wshap_oob"] = weighted_shap(attr_oob, data.labels, SampleSplit::kOob).scores;

    for (const auto& method : result.methods) {
      result.auc_per_rep[method].push_back(auc(scores.at(method), relevance));
      push_records(result.records, rep, method, data.column_names, scores.at(method));
    }
  }

  for (const auto& method : result.methods) {
    result.auc_mean[method] = mean_of(result.auc_per_rep.at(method));
    result.auc_se[method] = se_of(result.auc_per_rep.at(method));
  }
  return result;
}

NullPowerResult run_null_power(const StroblConfig& config, std::uint64_t seed,
                               int jobs) {
  config.validate();
  NullPowerResult result;
  result.config = config;
  result.seed = seed;
  result.feature_names = {"X1", "X2", "X3", "X4", "X5"};
  result.methods = {"mdi", "shap", "pg:0.5:1", "wshap_oob"};

  std::map<std::string, std::vector<std::vector<double>>> all_scores;  // method -> [rep][feature]
  for (int rep = 0; rep < config.reps; ++rep) {
    RngStream data_rng = RngStream::derive(seed, 2 * static_cast<std::uint64_t>(rep));
    Dataset data = gen_strobl(config, data_rng);
    ForestParams params = config.forest;
    params.seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    const Forest forest = fit_forest(data, params, jobs);

    std::map<std::string, std::vector<double>> scores;
    scores["mdi"] = mdi(forest).scores;
    scores["pg:0.5:1"] = pg_importance(forest, PGConfig{0.5, 1.0, false}).scores;
    const AttributionMatrix attr_in = shap_forest(forest, data, CoverSource::kInbag, jobs);
    const AttributionMatrix attr_oob = shap_forest(forest, data, CoverSource::kOob, jobs);
    scores["shap"] = mean_abs_attribution(attr_in, SampleSplit::kAll).scores;
    scores["wshap_oob"] = weighted_shap(attr_oob, data.labels, SampleSplit::kOob).scores;

    for (const auto& method : result.methods) {
      all_scores[method].push_back(scores.at(method));
      push_records(result.records, rep, method, result.feature_names, scores.at(method));
    }
  }

  const std::size_t p = result.feature_names.size();
  for (const auto& method : result.methods) {
    const auto& rows = all_scores.at(method);
    std::vector<FeatureDistribution> dists(p);
    std::vector<double> rank1(p, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      std::vector<double> column;
      column.reserve(rows.size());
      for (const auto& row : rows) column.push_back(row[k]);
      dists[k] = summarize(std::move(column));
    }
    for (const auto& row : rows) {
      const std::size_t top = static_cast<std::size_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
      rank1[top] += 1.0;
    }
    for (double& f : rank1) f /= static_cast<double>(rows.size());
    result.distributions[method] = std::move(dists);
    result.rank1_fraction[method] = std::move(rank1);
  }
  return result;
}

// ----- Titanic -----

void TitanicConfig::validate() const {
  if (path.empty()) throw ConfigError("titanic: data path required");
  if (n_seeds < 1) throw ConfigError("titanic: n_seeds must be >= 1");
  if (mda_permutations < 1) throw ConfigError("titanic: mda_permutations must be >= 1");
}

TitanicResult run_titanic(const TitanicConfig& config, int jobs) {
  config.validate();
  TitanicResult result;
  result.config = config;
  const Dataset base_data = load_titanic(config.path);
  result.feature_names = base_data.column_names;
  result.methods = {"mdi",       "mda",      "cfc",       "cfc_mdi_in",
                    "cfc_mdi_oob", "shap",   "shap_in",   "shap_oob",
                    "wshap_in",  "wshap_oob", "pg:0.5:1", "pg:0.5:1:corrected"};

  const std::size_t p = base_data.p;
  for (int s = 0; s < config.n_seeds; ++s) {
    Dataset data = base_data;
    if (config.shuffle_id) {
      RngStream shuffle_rng = RngStream::derive(config.seed ^ 0xa5a5a5a5u, static_cast<std::uint64_t>(s));
      data = base_data.with_shuffled_column(0, shuffle_rng);  // PassengerId is column 0
    }
    ForestParams params = config.forest;
    params.seed = mix_seed(config.seed, static_cast<std::uint64_t>(s));
    const Forest forest = fit_forest(data, params, jobs);

    std::map<std::string, std::vector<double>> scores;
    scores["mdi"] = mdi(forest).scores;
    RngStream mda_rng = RngStream::derive(config.seed ^ 0xdeadbeefu, static_cast<std::uint64_t>(s));
    scores["mda"] = mda_permutation(forest, data, config.mda_permutations, mda_rng).scores;
    scores["pg:0.5:1"] = pg_importance(forest, PGConfig{0.5, 1.0, false}).scores;
    scores["pg:0.5:1:corrected"] = pg_importance(forest, PGConfig{0.5, 1.0, true}).scores;

    const AttributionMatrix cfc_attr = cfc_forest(forest, data, CoverSource::kInbag, jobs);
    scores["cfc"] = global_cfc(cfc_attr).scores;

    // per-tree restricted covariance sums, averaged over trees
    std::vector<double> cfc_mdi_in(p, 0.0), cfc_mdi_oob(p, 0.0);
    std::size_t oob_trees = 0;
    for (const Tree& tree : forest.trees) {
      const std::vector<double> in_part = mdi_via_cfc(tree, data, SampleSplit::kInbag);
      for (std::size_t k = 0; k < p; ++k) cfc_mdi_in[k] += in_part[k];
      if (!tree.oob_indices.empty()) {
        ++oob_trees;
        const std::vector<double> oob_part = mdi_via_cfc(tree, data, SampleSplit::kOob);
        for (std::size_t k = 0; k < p; ++k) cfc_mdi_oob[k] += oob_part[k];
      }
    }
    for (std::size_t k = 0; k < p; ++k) {
      cfc_mdi_in[k] /= static_cast<double>(forest.trees.size());
      cfc_mdi_oob[k] /= static_cast<double>(oob_trees);
    }
    scores["cfc_mdi_in"] = cfc_mdi_in;
    scores["cfc_mdi_oob"] = cfc_mdi_oob;

    const AttributionMatrix attr_in = shap_forest(forest, data, CoverSource::kInbag, jobs);
    const AttributionMatrix attr_oob = shap_forest(forest, data, CoverSource::kOob, jobs);
    scores["shap"] = mean_abs_attribution(attr_in, SampleSplit::kAll).scores;
    scores["shap_in"] = mean_abs_attribution(attr_in, SampleSplit::kInbag).scores;
    scores["shap_oob"] = mean_abs_attribution(attr_oob, SampleSplit::kOob).scores;
    scores["wshap_in"] = weighted_shap(attr_in, data.labels, SampleSplit::kInbag).scores;
    scores["wshap_oob"] = weighted_shap(attr_oob, data.labels, SampleSplit::kOob).scores;

    for (const auto& method : result.methods) {
      result.per_seed[method].push_back(scores.at(method));
      push_records(result.records, s, method, result.feature_names, scores.at(method));
    }
  }

  for (const auto& method : result.methods) {
    const auto& rows = result.per_seed.at(method);
    std::vector<double> mean(p, 0.0), se(p, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      std::vector<double> column;
      column.reserve(rows.size());
      for (const auto& row : rows) column.push_back(row[k]);
      mean[k] = mean_of(column);
      se[k] = se_of(column);
    }
    result.mean[method] = std::move(mean);
    result.se[method] = std::move(se);
  }
  return result;
}

// ----- null-split bias -----

void SplitBiasConfig::validate() const {
  if (node_sizes.empty()) throw ConfigError("splitbias: need at least one node size");
  for (const int n : node_sizes) {
    if (n < 4) throw ConfigError("splitbias: node sizes must be >= 4");
  }
  if (reps < 1) throw ConfigError("splitbias: reps must be >= 1");
  if (label_p < 0.0 || label_p > 1.0) throw ConfigError("splitbias: label_p in [0,1]");
}

SplitBiasResult run_null_split_bias(const SplitBiasConfig& config) {
  config.validate();
  SplitBiasResult result;
  result.config = config;

  for (std::size_t si = 0; si < config.node_sizes.size(); ++si) {
    const int n = config.node_sizes[si];
    RngStream rng = RngStream::derive(config.seed, si);
    const double nd = static_cast<double>(n);

    auto gini = [](double count1, double total) {
      const double q = count1 / total;
      return q * (1.0 - q);
    };

    double sum_u = 0.0, sumsq_u = 0.0, sum_c = 0.0, sumsq_c = 0.0;
    std::vector<int> labels(static_cast<std::size_t>(n));
    std::vector<bool> goes_left(static_cast<std::size_t>(n));
    for (long long rep = 0; rep < config.reps; ++rep) {
      int total1 = 0;
      for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = rng.next_bernoulli(config.label_p) ? 1 : 0;
        total1 += labels[static_cast<std::size_t>(i)];
      }
      // split variable independent of the labels; both children need >= 2
      // samples so that N/(N-1) is defined
      int n_left = 0, left1 = 0;
      for (;;) {
        const double split_prob = rng.next_uniform(0.3, 0.7);
        n_left = 0;
        left1 = 0;
        for (int i = 0; i < n; ++i) {
          const bool left = rng.next_bernoulli(split_prob);
          goes_left[static_cast<std::size_t>(i)] = left;
          if (left) {
            ++n_left;
            left1 += labels[static_cast<std::size_t>(i)];
          }
        }
        if (n_left >= 2 && n - n_left >= 2) break;
      }
      const int n_right = n - n_left;
      const int right1 = total1 - left1;
      const double nl = static_cast<double>(n_left);
      const double nr = static_cast<double>(n_right);

      const double g_p = gini(total1, nd);
      const double g_l = gini(left1, nl);
      const double g_r = gini(right1, nr);
      const double delta_u = g_p - (nl / nd) * g_l - (nr / nd) * g_r;
      const double delta_c = (nd / (nd - 1.0)) * g_p -
                             (nl / nd) * (nl / (nl - 1.0)) * g_l -
                             (nr / nd) * (nr / (nr - 1.0)) * g_r;
      sum_u += delta_u;
      sumsq_u += delta_u * delta_u;
      sum_c += delta_c;
      sumsq_c += delta_c * delta_c;
      if (config.keep_records) {
        result.records.push_back({static_cast<int>(rep), "uncorrected",
                                  std::to_string(n), delta_u});
        result.records.push_back({static_cast<int>(rep), "corrected",
                                  std::to_string(n), delta_c});
      }
    }

    const double reps = static_cast<double>(config.reps);
    SplitBiasRow row;
    row.node_size = n;
    row.uncorrected_mean = sum_u / reps;
    row.corrected_mean = sum_c / reps;
    const double var_u = (sumsq_u - sum_u * sum_u / reps) / (reps - 1.0);
    const double var_c = (sumsq_c - sum_c * sum_c / reps) / (reps - 1.0);
    row.uncorrected_se = std::sqrt(std::max(0.0, var_u) / reps);
    row.corrected_se = std::sqrt(std::max(0.0, var_c) / reps);
    row.analytic_target = config.label_p * (1.0 - config.label_p) / nd;
    result.rows.push_back(row);
  }
  return result;
}

// ----- synthetic Titanic -----

void write_synthetic_titanic_csv(const std::string& path, std::uint64_t seed,
                                 int n_rows, int n_missing_age) {
  if (n_missing_age >= n_rows) throw ConfigError("synthetic titanic: too many missing ages");
  RngStream rng(seed);

  std::vector<bool> age_missing(static_cast<std::size_t>(n_rows), false);
  {
    std::vector<int> ids =
        rng.sample_without_replacement(n_rows, n_missing_age);
    for (const int i : ids) age_missing[static_cast<std::size_t>(i)] = true;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "PassengerId,Survived,Pclass,Name,Sex,Age,SibSp,Parch,Fare,Embarked\n";
  const char* embarked[3] = {"S", "C", "Q"};
  for (int i = 0; i < n_rows; ++i) {
    const double u_class = rng.next_unit();
    const int pclass = u_class < 0.24 ? 1 : (u_class < 0.45 ? 2 : 3);
    const bool male = rng.next_bernoulli(0.65);
    double age = 29.0 + 14.0 * rng.next_normal();
    age = std::min(80.0, std::max(0.42, age));
    age = std::round(age * 2.0) / 2.0;

    // survival depends strongly on Sex and moderately on Pclass and Age
    const double z = 1.1 - 2.6 * (male ? 1.0 : 0.0) +
                     (pclass == 1 ? 1.1 : (pclass == 2 ? 0.4 : 0.0)) -
                     0.022 * (age - 29.0);
    const int survived = rng.next_bernoulli(logistic(z)) ? 1 : 0;

    const int sibsp = static_cast<int>(rng.next_below(3));
    const int parch = static_cast<int>(rng.next_below(3));
    const double fare = pclass == 1 ? 60.0 + 40.0 * rng.next_unit()
                                    : (pclass == 2 ? 15.0 + 15.0 * rng.next_unit()
                                                   : 5.0 + 10.0 * rng.next_unit());
    out << (i + 1) << ',' << survived << ',' << pclass << ",\"Passenger, No. "
        << (i + 1) << "\"," << (male ? "male" : "female") << ',';
    if (!age_missing[static_cast<std::size_t>(i)]) out << age;
    out << ',' << sibsp << ',' << parch << ',' << fare << ','
        << embarked[rng.next_below(3)] << '\n';
  }
}

}  // namespace oobforest
