#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ttc/backend.hpp"

namespace ttc {

enum class TrialKind { scale_down, scale_up };

std::string_view to_string(TrialKind kind);
TrialKind trial_kind_from_string(std::string_view text);

// failed: retries exhausted, re-run on resume.
// terminal_error: non-retryable backend error, never re-run.
// budget_exhausted: a Wait-loop step hit the ceiling; later steps are skipped.
enum class TrialStatus { ok, failed, terminal_error, budget_exhausted };

std::string_view to_string(TrialStatus status);
TrialStatus trial_status_from_string(std::string_view text);

// A failed record may be superseded by a later attempt; every other status
// settles its key.
inline bool is_settled(TrialStatus s) { return s != TrialStatus::failed; }
// Settled without a usable generation; closes the rest of a Wait loop.
inline bool closes_trial(TrialStatus s) {
  return s == TrialStatus::terminal_error || s == TrialStatus::budget_exhausted;
}

/// Unit of persistence: (run, problem, budget-or-step).
struct TrialKey {
  int run = 0;
  std::string problem_id;
  TrialKind kind = TrialKind::scale_down;
  std::int64_t index = 0;  // budget for scale_down, step for scale_up

  std::string to_string() const;
  friend auto operator<=>(const TrialKey&, const TrialKey&) = default;
};

struct TrialRecord {
  std::string run_id;
  int run_index = 0;
  std::string problem_id;
  TrialKind kind = TrialKind::scale_down;
  std::int64_t index = 0;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  std::string text;  // reasoning (scale_down) or this step's continuation (scale_up)
  backend::FinishReason finish_reason;
  backend::Usage usage;
  std::optional<std::string> extracted_answer;
  bool correct = false;
  TrialStatus status = TrialStatus::ok;
  std::string ts;

  bool format_compliant = false;
  bool usage_missing = false;
  std::optional<std::string> error;

  // scale_down
  bool truncated = false;
  std::optional<std::string> forced_answer_text;
  std::optional<backend::FinishReason> forced_finish_reason;

  // scale_up
  std::optional<std::string> cumulative_text;
  // Answer read from this step's continuation alone, for the alternative
  // extraction window.
  std::optional<std::string> continuation_answer;

  TrialKey key() const { return {run_index, problem_id, kind, index}; }

  nlohmann::ordered_json to_json() const;
  static TrialRecord from_json(const nlohmann::ordered_json& j);

  /// Equality of everything except the timestamp.
  bool same_outcome(const TrialRecord& other) const;
};

std::string now_iso8601();

}  // namespace ttc
