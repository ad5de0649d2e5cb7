#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ttc/analytics.hpp"
#include "ttc/runstore.hpp"

namespace ttc::report {

inline constexpr const char* kScalingCurveFile = "scaling_curve.csv";
inline constexpr const char* kRepetitionTableFile = "repetition_table.csv";
inline constexpr const char* kOscillationFile = "oscillation.csv";
inline constexpr const char* kMetaFile = "analysis_meta.json";

struct AnalyzeOptions {
  // Run ids or run indices, each with an operator-supplied reason. Runs
  // already marked invalid in the manifest are excluded as well.
  std::vector<analytics::Exclusion> exclusions;
};

/// CSV/JSON renderings of a run store. Every field is a pure function of the
/// store contents and the options.
struct Analysis {
  std::string scaling_curve_csv;
  std::optional<std::string> repetition_table_csv;  // scale-up stores with K >= 1
  std::optional<std::string> oscillation_csv;       // scale-up stores
  std::string meta_json;
  std::optional<std::string> refusal;  // why a table that applies could not be produced
  std::vector<std::string> warnings;
  std::optional<analytics::MetricsTable> table;
};

Analysis analyze(const runstore::RunStore& store, const AnalyzeOptions& options = {});

/// Writes the produced files into `out_dir` (created if needed).
std::vector<std::filesystem::path> write_analysis(const Analysis& analysis, const std::filesystem::path& out_dir);

}  // namespace ttc::report
