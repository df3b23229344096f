#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "oobforest/dataset.hpp"
#include "oobforest/explain.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/importance.hpp"
#include "oobforest/rng.hpp"

namespace oobforest {

/// One row of a study's long-format output.
struct StudyRecord {
  int rep = 0;
  std::string method;
  std::string feature;
  double score = 0.0;
};

// ----- null/power simulation (five predictors of varying cardinality) -----

struct StroblConfig {
  enum class Case { kNull, kPower };
  int n = 120;
  Case study_case = Case::kNull;
  int reps = 100;
  ForestParams forest{.n_trees = 100, .mtry = 2, .min_leaf = 1};

  void validate() const;  // n >= 20, reps >= 1
};

/// X1 uniform on [0,1]; X2..X5 uniform multinomial with 2, 4, 10, 20
/// categories. Null case: y ~ Bernoulli(0.5) independent of X. Power case:
/// P(y=1 | X2=0) = 0.35 and P(y=1 | X2=1) = 0.65, all other features inert.
Dataset gen_strobl(const StroblConfig& config, RngStream& rng);

struct FeatureDistribution {
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double se_median = 0.0;  // 1.2533 * sd / sqrt(reps)
};

struct NullPowerResult {
  StroblConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> methods;
  // method -> per-feature distribution over repetitions
  std::map<std::string, std::vector<FeatureDistribution>> distributions;
  // method -> per-feature fraction of repetitions where it ranked first
  std::map<std::string, std::vector<double>> rank1_fraction;
  std::vector<StudyRecord> records;
};

/// Scores MDI, raw SHAP, PG(0.5,1) and y-weighted OOB SHAP per repetition.
NullPowerResult run_null_power(const StroblConfig& config, std::uint64_t seed,
                               int jobs = 0);

// ----- noisy-feature identification (AUC benchmark) -----

struct NoisyConfig {
  int n = 1000;
  int p = 50;
  int n_relevant = 5;
  int relevant_pool = 10;  // relevant set drawn from the first 10 features
  int reps = 100;
  bool resample_relevant = true;  // fresh relevant set each repetition
  ForestParams forest{.n_trees = 100, .mtry = 3, .min_leaf = 1};

  void validate() const;
};

/// Feature j (1-indexed) uniform on {0..j}; y ~ Bernoulli(Logistic(
/// (2/5) * sum_{j in S} x_j / j - 1)) with S the relevant set (0-indexed ids).
std::pair<Dataset, std::vector<int>> gen_noisy(const NoisyConfig& config,
                                               RngStream& rng);

/// Mann-Whitney AUC of scores against 0/1 relevance labels:
/// P(score_relevant > score_noise) + 0.5 P(tie). Throws if single-class.
double auc(const std::vector<double>& scores, const std::vector<int>& relevance_labels);

struct NoisyResult {
  NoisyConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;
  std::map<std::string, std::vector<double>> auc_per_rep;
  std::map<std::string, double> auc_mean;
  std::map<std::string, double> auc_se;
  std::vector<StudyRecord> records;
};

/// Per repetition: generate, fit, score with the PG family (corrected and
/// not), SHAP variants (raw and y-weighted, inbag/OOB separated), MDA and
/// MDI, then compute each method's AUC against the relevant set.
NoisyResult run_noisy(const NoisyConfig& config, std::uint64_t seed, int jobs = 0);

// ----- Titanic study -----

struct TitanicConfig {
  std::string path;
  ForestParams forest{.n_trees = 100, .mtry = 2, .min_leaf = 1};
  int n_seeds = 10;
  std::uint64_t seed = 0;
  bool shuffle_id = false;  // re-run with PassengerId randomly shuffled
  int mda_permutations = 1;

  void validate() const;
};

struct TitanicResult {
  TitanicConfig config;
  std::vector<std::string> feature_names;
  std::vector<std::string> methods;
  // method -> per-seed per-feature scores
  std::map<std::string, std::vector<std::vector<double>>> per_seed;
  std::map<std::string, std::vector<double>> mean;
  std::map<std::string, std::vector<double>> se;
  std::vector<StudyRecord> records;
};

/// Fits forests over n_seeds seeds and reports MDI, MDA, global CFC, the
/// MDI-as-CFC restricted sums (inbag vs OOB), raw and y-weighted SHAP
/// (inbag vs OOB) and PG(0.5,1), seed-averaged with standard errors.
TitanicResult run_titanic(const TitanicConfig& config, int jobs = 0);

// ----- null-split bias Monte Carlo -----

struct SplitBiasConfig {
  std::vector<int> node_sizes{10, 50, 200};  // OOB sample count per node
  long long reps = 100000;
  double label_p = 0.5;  // Bernoulli class-1 probability
  std::uint64_t seed = 0;
  bool keep_records = false;

  void validate() const;  // node sizes >= 4
};

struct SplitBiasRow {
  int node_size = 0;
  double uncorrected_mean = 0.0;
  double uncorrected_se = 0.0;
  double corrected_mean = 0.0;
  double corrected_se = 0.0;
  double analytic_target = 0.0;  // sigma^2_oob / N_m
};

struct SplitBiasResult {
  SplitBiasConfig config;
  std::vector<SplitBiasRow> rows;
  std::vector<StudyRecord> records;  // only when keep_records
};

/// Simulates parent nodes whose split variable is independent of the
/// Bernoulli labels and measures the mean OOB Gini decrease with and without
/// the N/(N-1) correction, against the analytic bias sigma^2/N_m.
SplitBiasResult run_null_split_bias(const SplitBiasConfig& config);

// ----- synthetic Titanic stand-in -----

/// Writes a CSV with the Kaggle Titanic train schema: 891 rows, 177 missing
/// Age, survival driven by Sex (strong), Pclass and Age (moderate), and an
/// uninformative sequential PassengerId. Used where the real file is absent;
/// any standard Titanic train.csv can be substituted.
void write_synthetic_titanic_csv(const std::string& path, std::uint64_t seed,
                                 int n_rows = 891, int n_missing_age = 177);

}  // namespace oobforest
