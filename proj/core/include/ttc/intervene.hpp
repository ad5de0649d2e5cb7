#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ttc/backend.hpp"
#include "ttc/config.hpp"
#include "ttc/corpus.hpp"
#include "ttc/extract.hpp"
#include "ttc/record.hpp"
#include "ttc/runstore.hpp"
#include "ttc/transcript.hpp"

namespace ttc::intervene {

inline constexpr std::int64_t kDefaultForcedAnswerCap = 64;

/// Outcome of one budget-forced solve.
struct ScaleDownTrial {
  std::string problem_id;
  std::int64_t budget = 0;
  bool truncated = false;
  std::string reasoning_text;
  backend::FinishReason reasoning_finish;
  std::optional<std::string> forced_answer_text;  // present iff truncated and the second call succeeded
  std::optional<backend::FinishReason> forced_finish;
  std::optional<extract::Extraction> extracted;
  bool correct = false;
  backend::Usage usage;  // both calls
  bool usage_missing = false;
  TrialStatus status = TrialStatus::ok;
  std::optional<std::string> error;
  std::vector<backend::Completion> calls;  // raw backend outputs, in call order
};

/// Solve at `params.max_completion_tokens`; on finish_reason length, re-ask
/// with the forced-answer prompt capped at `forced_answer_cap` tokens and
/// grade that answer instead. Backend errors are captured in the trial
/// (status failed or terminal_error); they do not propagate.
ScaleDownTrial run_scale_down(const corpus::Problem& problem, backend::Backend& backend,
                              const transcript::PromptProfile& profile, const backend::GenParams& params, int run,
                              std::int64_t forced_answer_cap = kDefaultForcedAnswerCap);

struct ScaleUpStep {
  std::string problem_id;
  int step_index = 0;  // 0 = initial response
  std::string continuation_text;
  std::string cumulative_text;
  backend::FinishReason finish_reason;
  std::optional<extract::Extraction> extracted;        // last box in cumulative_text
  std::optional<extract::Extraction> continuation_box;  // last box in continuation_text only
  bool correct = false;
  backend::Usage usage;
  bool usage_missing = false;
  TrialStatus status = TrialStatus::ok;
  std::optional<std::string> error;
  std::optional<backend::Completion> call;
};

struct ScaleUpTrial {
  std::vector<ScaleUpStep> steps;  // steps produced by this call (resumed steps excluded)
  bool complete = false;           // reached step K
};

struct ScaleUpOptions {
  int wait_count = 1;
  int run = 0;
  // Resume after this step instead of starting from scratch.
  std::optional<ScaleUpStep> resume_from;
  // Called with every step as soon as it exists (persist here).
  std::function<void(const ScaleUpStep&)> on_step;
  // Checked before each generation; false stops the loop early.
  std::function<bool()> may_continue;
};

/// Initial solve, then for k = 1..K: append the cue to the accumulated
/// assistant text, re-prompt with the whole history and append the
/// continuation. The loop stops early at a step that hits the ceiling
/// (finish_reason length, status budget_exhausted) or at a backend error;
/// any other finish reason counts as the model ending its turn.
ScaleUpTrial run_scale_up(const corpus::Problem& problem, backend::Backend& backend,
                          const transcript::PromptProfile& profile, const backend::GenParams& params,
                          const ScaleUpOptions& options);

TrialRecord to_record(const ScaleDownTrial& trial, const SweepConfig& config, int run,
                      const backend::GenParams& params);
TrialRecord to_record(const ScaleUpStep& step, const SweepConfig& config, int run, const backend::GenParams& params);
ScaleUpStep step_from_record(const TrialRecord& record, const corpus::Problem& problem);

backend::GenParams params_for(const SweepConfig& config, int run, std::int64_t max_completion_tokens);

struct SweepOptions {
  // Stop after this many trial records have been appended (simulated
  // interruption; also useful for smoke runs).
  std::optional<std::int64_t> trial_limit;
  const std::atomic<bool>* cancel = nullptr;
};

struct SweepResult {
  runstore::RunManifest manifest;
  std::int64_t executed = 0;  // records appended by this call
  std::int64_t pending = 0;   // keys still pending afterwards
};

/// Runs every pending key of the config's grid against `backend`, appending
/// each record once through the store. Problems run concurrently up to
/// config.concurrency; steps of one Wait loop are sequential.
SweepResult run_sweep(const SweepConfig& config, const corpus::ProblemSet& problems, runstore::RunStore& store,
                      backend::Backend& backend, const SweepOptions& options = {});

}  // namespace ttc::intervene
