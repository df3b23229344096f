#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oobforest/explain.hpp"
#include "oobforest/experiments.hpp"
#include "oobforest/forest.hpp"
#include "oobforest/importance.hpp"

namespace oobforest {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a over the canonical key=value config string; used so reruns with an
/// equal configuration can be recognized from the output header alone.
std::uint64_t config_hash(const std::map<std::string, std::string>& config);

std::string hash_hex(std::uint64_t h);

// Header written at the top of every output file ("# key=value" lines for
// CSV, a "meta" object for JSON).
struct OutputMeta {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // echoed verbatim

  std::string hash() const { return hash_hex(config_hash(config)); }
};

// ----- forest JSON (schema version 1) -----

/// Serializes the forest: format/version fields, params, and per tree the
/// inbag multiplicities plus a nodes array with id, feature, threshold,
/// children, n_in, n_oob, class_counts_in, class_counts_oob.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);

void save_forest(const Forest& forest, const std::string& path);
Forest load_forest(const std::string& path);

// ----- report / attribution files -----

void write_importance_csv(const ImportanceReport& report, const std::string& path,
                          const OutputMeta& meta);
void write_importance_json(const ImportanceReport& report, const std::string& path,
                           const OutputMeta& meta);

/// Long-format rows (sample_id, feature, value, membership) for the splits
/// present in the matrix; base values recorded in the header/metadata.
void write_attributions_csv(const AttributionMatrix& attr, const std::string& path,
                            const OutputMeta& meta);
void write_attributions_json(const AttributionMatrix& attr, const std::string& path,
                             const OutputMeta& meta);

// ----- study files: <study>_<seed>.csv plus a JSON summary -----

void write_study_records_csv(const std::vector<StudyRecord>& records,
                             const std::string& path, const OutputMeta& meta);

std::string noisy_summary_json(const NoisyResult& result, const OutputMeta& meta);
std::string null_power_summary_json(const NullPowerResult& result, const OutputMeta& meta);
std::string titanic_summary_json(const TitanicResult& result, const OutputMeta& meta);
std::string split_bias_summary_json(const SplitBiasResult& result, const OutputMeta& meta);

void write_text(const std::string& path, const std::string& text);

}  // namespace oobforest
