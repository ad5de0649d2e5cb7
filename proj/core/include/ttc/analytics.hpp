#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttc/record.hpp"

namespace ttc::analytics {

/// Exact non-negative rational. Percentages are kept exact until they are
/// printed, so averaging and rounding happen once.
class Ratio {
 public:
  Ratio() = default;
  Ratio(std::int64_t num, std::int64_t den);

  static Ratio percent(std::int64_t count, std::int64_t total) { return Ratio(100 * count, total); }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  Ratio operator+(const Ratio& rhs) const;
  Ratio divided_by(std::int64_t n) const;

  /// Half-up rounding to one decimal: 13.333 -> "13.3", 86.65 -> "86.7".
  std::string format_1dp() const;

  friend bool operator==(const Ratio&, const Ratio&) = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct AccuracyPoint {
  std::int64_t index = 0;  // budget or step
  Ratio percent;

  friend bool operator==(const AccuracyPoint&, const AccuracyPoint&) = default;
};

/// 100 * correct / total. Throws ValidationError naming `cell` when empty.
Ratio accuracy_percent(std::string_view cell, const std::vector<bool>& correct);

/// One point per distinct index, ascending.
std::vector<AccuracyPoint> accuracy_points(const std::vector<TrialRecord>& records);

/// As above, requiring a point for every index in `expected`.
std::vector<AccuracyPoint> accuracy_points(const std::vector<TrialRecord>& records,
                                           const std::vector<std::int64_t>& expected);

struct LabelSequence {
  std::string problem_id;
  std::vector<bool> labels;  // correctness at steps 0..K
};

struct FlipProfile {
  int flips = 0;
  bool oscillating = false;  // flips >= 2

  friend bool operator==(const FlipProfile&, const FlipProfile&) = default;
};

FlipProfile flip_profile(const LabelSequence& sequence);

struct StepAnswer {
  std::string problem_id;
  std::optional<std::string> answer;  // canonical
};

/// Share of problems whose answer did not change between two steps. Two
/// present answers count as unchanged when canonically equal; two absent
/// answers count as unchanged; present vs absent counts as changed. Throws
/// ValidationError when the two steps cover different problems.
Ratio answer_unchanged_rate(const std::vector<StepAnswer>& previous, const std::vector<StepAnswer>& current);

struct StepResponse {
  std::string problem_id;
  // Continuation generated at the step; nullopt when the step was never
  // generated, which never counts as a repeat.
  std::optional<std::string> text;
};

/// Share of problems whose continuation is an exact repeat of the previous
/// step's, after trimming leading and trailing whitespace.
Ratio response_repetition_rate(const std::vector<StepResponse>& previous, const std::vector<StepResponse>& current);

struct RunMetrics {
  std::string run_id;
  std::vector<std::pair<std::string, Ratio>> cells;  // column -> percent, column order preserved
};

struct Exclusion {
  std::string run_id;
  std::string reason;
};

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<Ratio> values;  // unweighted mean over valid runs
  int runs_used = 0;
  std::vector<Exclusion> excluded;

  /// Comma-joined values at one decimal.
  std::string row_csv() const;
  std::string header_csv() const;
};

/// Averages every column over the runs not named in `exclusions`. All runs
/// must share the same columns. Throws ValidationError if every run is
/// excluded or an exclusion names an unknown run.
MetricsTable aggregate_runs(const std::vector<RunMetrics>& runs, const std::vector<Exclusion>& exclusions);

// ---------------------------------------------------------------------------
// Views over persisted scale-up records.

struct StepView {
  std::optional<std::string> answer;
  bool correct = false;
  std::string continuation;
  bool generated = false;  // false for steps carried over after the loop closed
};

/// Per run, per problem, steps 0..K. Steps missing after a trial closed early
/// (budget exhausted or failure) inherit the last step's answer and
/// correctness with an empty continuation.
using ScaleUpView = std::map<int, std::map<std::string, std::vector<StepView>>>;

ScaleUpView scale_up_view(const std::vector<TrialRecord>& records, int wait_count);

/// Columns acc_init, acc_wait1..K, ans_rep_wait1..K, resp_rep_wait2..K.
std::vector<std::string> repetition_columns(int wait_count);

/// Per-run repetition metrics for a scale-up store (wait_count >= 1).
std::vector<RunMetrics> scale_up_run_metrics(const ScaleUpView& view, int wait_count,
                                             const std::map<int, std::string>& run_ids);

std::vector<LabelSequence> label_sequences(const std::map<std::string, std::vector<StepView>>& run);

struct GibberishWarning {
  std::string run_id;
  std::int64_t flagged = 0;
  std::int64_t total = 0;
};

/// Heuristic nonsense detector over generated texts. It only produces
/// warnings; runs are excluded by the operator.
bool looks_like_gibberish(std::string_view text);
std::vector<GibberishWarning> gibberish_warnings(const std::vector<TrialRecord>& records, double threshold = 0.5);

}  // namespace ttc::analytics
