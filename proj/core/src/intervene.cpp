#include "ttc/intervene.hpp"

#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "ttc/error.hpp"

namespace ttc::intervene {

using backend::CallKey;
using backend::CallKind;
using backend::FinishReason;

namespace {

void capture(const BackendError& e, TrialStatus& status, std::optional<std::string>& error) {
  status = e.retryable() ? TrialStatus::failed : TrialStatus::terminal_error;
  std::string message = e.what();
  if (!e.diagnostic().empty() && message.find(e.diagnostic()) == std::string::npos) {
    message += " [" + e.diagnostic() + "]";
  }
  error = std::move(message);
}

}  // namespace

ScaleDownTrial run_scale_down(const corpus::Problem& problem, backend::Backend& backend,
                              const transcript::PromptProfile& profile, const backend::GenParams& params, int run,
                              std::int64_t forced_answer_cap) {
  params.validate(backend.max_temperature());
  if (forced_answer_cap < 1) throw ValidationError("forced answer cap must be >= 1");

  ScaleDownTrial t;
  t.problem_id = problem.id;
  t.budget = params.max_completion_tokens;
  const auto solve = transcript::build_initial_conversation(problem, profile);
  try {
    auto first = backend.generate(solve, params, CallKey{problem.id, CallKind::scale_down, t.budget, run});
    t.reasoning_text = first.text;
    t.reasoning_finish = first.finish_reason;
    t.usage += first.usage;
    t.usage_missing = first.usage_missing;
    t.calls.push_back(std::move(first));

    if (t.reasoning_finish.kind != FinishReason::Kind::length) {
      t.extracted = extract::extract_boxed(t.reasoning_text, problem.answer_kind);
    } else {
      t.truncated = true;
      if (!t.reasoning_text.empty()) {
        const auto forced = transcript::build_forced_answer_conversation(problem, t.reasoning_text, profile);
        auto forced_params = params;
        forced_params.max_completion_tokens = forced_answer_cap;
        auto second =
            backend.generate(forced, forced_params, CallKey{problem.id, CallKind::forced_answer, t.budget, run});
        t.forced_answer_text = second.text;
        t.forced_finish = second.finish_reason;
        t.usage += second.usage;
        t.usage_missing = t.usage_missing || second.usage_missing;
        t.extracted = extract::extract_boxed(second.text, problem.answer_kind);
        t.calls.push_back(std::move(second));
      }
    }
    t.correct = extract::grade(t.extracted, problem.gold_answer, problem.answer_kind);
  } catch (const BackendError& e) {
    capture(e, t.status, t.error);
    t.forced_answer_text.reset();
    t.forced_finish.reset();
    t.extracted.reset();
    t.correct = false;
  }
  return t;
}

ScaleUpTrial run_scale_up(const corpus::Problem& problem, backend::Backend& backend,
                          const transcript::PromptProfile& profile, const backend::GenParams& params,
                          const ScaleUpOptions& options) {
  params.validate(backend.max_temperature());
  profile.validate();
  if (options.wait_count < 0) throw ValidationError("wait count must be >= 0");

  ScaleUpTrial trial;
  const auto initial = transcript::build_initial_conversation(problem, profile);
  auto conversation = initial;
  std::string cumulative;
  int first_step = 0;
  if (options.resume_from) {
    const auto& last = *options.resume_from;
    if (last.status != TrialStatus::ok) throw ValidationError("can only resume a Wait loop after an ok step");
    cumulative = last.cumulative_text;
    first_step = last.step_index + 1;
  }
  if (first_step > options.wait_count) {
    trial.complete = true;
    return trial;
  }

  for (int k = first_step; k <= options.wait_count; ++k) {
    if (options.may_continue && !options.may_continue()) return trial;

    ScaleUpStep step;
    step.problem_id = problem.id;
    step.step_index = k;
    if (k > 0 && cumulative.empty()) {
      step.status = TrialStatus::terminal_error;
      step.error = "nothing to continue: the initial response was empty";
      if (options.on_step) options.on_step(step);
      trial.steps.push_back(std::move(step));
      return trial;
    }
    try {
      if (k > 0) conversation = transcript::append_cue(conversation, cumulative, profile.cue);
      auto c = backend.generate(conversation, params, CallKey{problem.id, CallKind::scale_up, k, options.run});
      if (k == 0) {
        cumulative = c.text;
      } else {
        cumulative.append("\n").append(profile.cue).append(c.text);
      }
      step.continuation_text = c.text;
      step.cumulative_text = cumulative;
      step.finish_reason = c.finish_reason;
      step.usage = c.usage;
      step.usage_missing = c.usage_missing;
      step.extracted = extract::extract_boxed(step.cumulative_text, problem.answer_kind);
      step.continuation_box = extract::extract_boxed(step.continuation_text, problem.answer_kind);
      step.correct = extract::grade(step.extracted, problem.gold_answer, problem.answer_kind);
      if (c.finish_reason.kind == FinishReason::Kind::length) step.status = TrialStatus::budget_exhausted;
      step.call = std::move(c);
    } catch (const BackendError& e) {
      capture(e, step.status, step.error);
    }
    if (options.on_step) options.on_step(step);
    const bool stop = step.status != TrialStatus::ok;
    trial.steps.push_back(std::move(step));
    if (stop) return trial;
  }
  trial.complete = true;
  return trial;
}

backend::GenParams params_for(const SweepConfig& config, int run, std::int64_t max_completion_tokens) {
  backend::GenParams p;
  p.max_completion_tokens = max_completion_tokens;
  p.temperature = config.temperature;
  p.seed = config.seed_for_run(run);
  p.extra = config.extra;
  return p;
}

TrialRecord to_record(const ScaleDownTrial& trial, const SweepConfig& config, int run,
                      const backend::GenParams& params) {
  TrialRecord r;
  r.run_id = config.run_id(run);
  r.run_index = run;
  r.problem_id = trial.problem_id;
  r.kind = TrialKind::scale_down;
  r.index = trial.budget;
  r.params = params.to_json();
  r.params["forced_answer_cap"] = config.forced_answer_cap;
  r.text = trial.reasoning_text;
  r.finish_reason = trial.reasoning_finish;
  r.usage = trial.usage;
  r.usage_missing = trial.usage_missing;
  if (trial.extracted) r.extracted_answer = trial.extracted->canonical;
  r.correct = trial.correct;
  r.status = trial.status;
  r.error = trial.error;
  r.ts = now_iso8601();
  r.truncated = trial.truncated;
  r.forced_answer_text = trial.forced_answer_text;
  r.forced_finish_reason = trial.forced_finish;
  r.format_compliant = extract::has_final_answer_sentence(trial.forced_answer_text.value_or(trial.reasoning_text));
  return r;
}

TrialRecord to_record(const ScaleUpStep& step, const SweepConfig& config, int run, const backend::GenParams& params) {
  TrialRecord r;
  r.run_id = config.run_id(run);
  r.run_index = run;
  r.problem_id = step.problem_id;
  r.kind = TrialKind::scale_up;
  r.index = step.step_index;
  r.params = params.to_json();
  r.params["cue"] = config.profile.cue;
  r.text = step.continuation_text;
  r.finish_reason = step.finish_reason;
  r.usage = step.usage;
  r.usage_missing = step.usage_missing;
  if (step.extracted) r.extracted_answer = step.extracted->canonical;
  r.correct = step.correct;
  r.status = step.status;
  r.error = step.error;
  r.ts = now_iso8601();
  r.format_compliant = extract::has_final_answer_sentence(step.continuation_text);
  r.cumulative_text = step.cumulative_text;
  if (step.continuation_box) r.continuation_answer = step.continuation_box->canonical;
  return r;
}

ScaleUpStep step_from_record(const TrialRecord& record, const corpus::Problem& problem) {
  ScaleUpStep s;
  s.problem_id = record.problem_id;
  s.step_index = static_cast<int>(record.index);
  s.continuation_text = record.text;
  s.cumulative_text = record.cumulative_text.value_or(std::string());
  s.finish_reason = record.finish_reason;
  s.extracted = extract::extract_boxed(s.cumulative_text, problem.answer_kind);
  s.continuation_box = extract::extract_boxed(s.continuation_text, problem.answer_kind);
  s.correct = record.correct;
  s.usage = record.usage;
  s.status = record.status;
  s.error = record.error;
  return s;
}

namespace {

nlohmann::ordered_json raw_entry(const SweepConfig& config, int run, const std::string& problem_id,
                                 std::string_view call_kind, std::int64_t index, const backend::Completion& c) {
  nlohmann::ordered_json j;
  j["run_id"] = config.run_id(run);
  j["run_index"] = run;
  j["problem_id"] = problem_id;
  j["call"] = call_kind;
  j["index"] = index;
  j["completion"] = c.to_json();
  j["ts"] = now_iso8601();
  return j;
}

struct Task {
  int run = 0;
  const corpus::Problem* problem = nullptr;
  std::int64_t budget = 0;                    // scale_down
  std::optional<TrialRecord> resume;          // scale_up
};

}  // namespace

SweepResult run_sweep(const SweepConfig& config, const corpus::ProblemSet& problems, runstore::RunStore& store,
                      backend::Backend& backend, const SweepOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto grid = runstore::trial_grid(config, problems);
  const auto pending = store.pending_trials(grid);

  std::vector<Task> tasks;
  if (config.intervention == Intervention::scale_down) {
    for (const auto& key : pending) tasks.push_back({key.run, &problems.at(key.problem_id), key.index, {}});
  } else {
    // One task per (run, problem), resuming after its last ok step.
    std::map<std::pair<int, std::string>, TrialRecord> last_ok;
    for (auto& r : store.effective_records()) {
      if (r.kind != TrialKind::scale_up || r.status != TrialStatus::ok) continue;
      auto k = std::pair{r.run_index, r.problem_id};
      auto it = last_ok.find(k);
      if (it == last_ok.end()) {
        last_ok.emplace(k, std::move(r));
      } else if (r.index > it->second.index) {
        it->second = std::move(r);
      }
    }
    std::pair<int, std::string> previous{-1, {}};
    for (const auto& key : pending) {
      std::pair<int, std::string> group{key.run, key.problem_id};
      if (group == previous) continue;
      previous = group;
      Task t{key.run, &problems.at(key.problem_id), 0, {}};
      if (auto it = last_ok.find(group); it != last_ok.end() && it->second.index < key.index) t.resume = it->second;
      tasks.push_back(std::move(t));
    }
  }

  std::atomic<std::int64_t> claimed{0};
  std::atomic<std::int64_t> executed{0};
  std::atomic<bool> abort{false};
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto claim = [&]() -> bool {
    if (abort.load()) return false;
    if (options.cancel != nullptr && options.cancel->load()) return false;
    if (!options.trial_limit) return true;
    return claimed.fetch_add(1) < *options.trial_limit;
  };

  auto run_task = [&](const Task& task) {
    const auto& problem = *task.problem;
    if (config.intervention == Intervention::scale_down) {
      if (!claim()) return;
      const auto params = params_for(config, task.run, task.budget);
      auto trial = run_scale_down(problem, backend, config.profile, params, task.run, config.forced_answer_cap);
      for (std::size_t i = 0; i < trial.calls.size(); ++i) {
        store.append_raw_completion(raw_entry(config, task.run, problem.id, i == 0 ? "scale_down" : "forced_answer",
                                              task.budget, trial.calls[i]));
      }
      store.append_trial(to_record(trial, config, task.run, params));
      ++executed;
      return;
    }
    const auto params = params_for(config, task.run, config.ceiling_budget);
    ScaleUpOptions up;
    up.wait_count = config.wait_count;
    up.run = task.run;
    if (task.resume) up.resume_from = step_from_record(*task.resume, problem);
    up.may_continue = claim;
    up.on_step = [&](const ScaleUpStep& step) {
      if (step.call) {
        store.append_raw_completion(raw_entry(config, task.run, problem.id, "scale_up", step.step_index, *step.call));
      }
      store.append_trial(to_record(step, config, task.run, params));
      ++executed;
    };
    run_scale_up(problem, backend, config.profile, params, up);
  };

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const auto i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        run_task(tasks[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.concurrency), tasks.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }

  const auto remaining = store.pending_trials(grid);
  std::int64_t completed = 0;
  std::int64_t failed = 0;
  for (const auto& r : store.effective_records()) {
    if (r.status == TrialStatus::failed || r.status == TrialStatus::terminal_error) {
      ++failed;
    } else {
      ++completed;
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  store.update_manifest([&](runstore::RunManifest& m) {
    m.completed = completed;
    m.failed = failed;
    m.pending = static_cast<std::int64_t>(remaining.size());
    m.wall_seconds += elapsed;
    if (remaining.empty()) m.finished = now_iso8601();
  });
  if (failure) std::rethrow_exception(failure);

  SweepResult result;
  result.manifest = store.manifest();
  result.executed = executed.load();
  result.pending = static_cast<std::int64_t>(remaining.size());
  return result;
}

}  // namespace ttc::intervene
