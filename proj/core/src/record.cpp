#include "ttc/record.hpp"

#include <chrono>
#include <ctime>

#include "ttc/error.hpp"

namespace ttc {

using nlohmann::ordered_json;

std::string_view to_string(TrialKind kind) { return kind == TrialKind::scale_down ? "scale_down" : "scale_up"; }

TrialKind trial_kind_from_string(std::string_view text) {
  if (text == "scale_down") return TrialKind::scale_down;
  if (text == "scale_up") return TrialKind::scale_up;
  throw ValidationError("unknown trial kind \"" + std::string(text) + "\"");
}

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::ok:
      return "ok";
    case TrialStatus::failed:
      return "failed";
    case TrialStatus::terminal_error:
      return "terminal_error";
    case TrialStatus::budget_exhausted:
      return "budget_exhausted";
  }
  return "ok";
}

TrialStatus trial_status_from_string(std::string_view text) {
  if (text == "ok") return TrialStatus::ok;
  if (text == "failed") return TrialStatus::failed;
  if (text == "terminal_error") return TrialStatus::terminal_error;
  if (text == "budget_exhausted") return TrialStatus::budget_exhausted;
  throw ValidationError("unknown trial status \"" + std::string(text) + "\"");
}

std::string TrialKey::to_string() const {
  return "run=" + std::to_string(run) + " problem=" + problem_id + " " +
         (kind == TrialKind::scale_down ? "budget=" : "step=") + std::to_string(index);
}

namespace {

template <typename T>
ordered_json optional_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<std::string> optional_string(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

ordered_json TrialRecord::to_json() const {
  ordered_json j;
  j["run_id"] = run_id;
  j["run_index"] = run_index;
  j["problem_id"] = problem_id;
  j["kind"] = ttc::to_string(kind);
  j[kind == TrialKind::scale_down ? "budget" : "step_index"] = index;
  j["params"] = params;
  j["text"] = text;
  j["finish_reason"] = finish_reason.to_wire();
  j["usage"] = {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}};
  j["extracted_answer"] = optional_json(extracted_answer);
  j["correct"] = correct;
  j["status"] = ttc::to_string(status);
  j["ts"] = ts;
  j["format_compliant"] = format_compliant;
  if (usage_missing) j["usage_missing"] = true;
  j["error"] = optional_json(error);
  if (kind == TrialKind::scale_down) {
    j["truncated"] = truncated;
    j["forced_answer_text"] = optional_json(forced_answer_text);
    j["forced_finish_reason"] = forced_finish_reason ? ordered_json(forced_finish_reason->to_wire()) : ordered_json(nullptr);
  } else {
    j["cumulative_text"] = optional_json(cumulative_text);
    j["continuation_answer"] = optional_json(continuation_answer);
  }
  return j;
}

TrialRecord TrialRecord::from_json(const ordered_json& j) {
  TrialRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.run_index = j.at("run_index").get<int>();
  r.problem_id = j.at("problem_id").get<std::string>();
  r.kind = trial_kind_from_string(j.at("kind").get<std::string>());
  r.index = j.at(r.kind == TrialKind::scale_down ? "budget" : "step_index").get<std::int64_t>();
  r.params = j.value("params", ordered_json::object());
  r.text = j.at("text").get<std::string>();
  r.finish_reason = backend::FinishReason::from_wire(j.at("finish_reason").get<std::string>());
  if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
    r.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  r.extracted_answer = optional_string(j, "extracted_answer");
  r.correct = j.at("correct").get<bool>();
  r.status = trial_status_from_string(j.at("status").get<std::string>());
  r.ts = j.value("ts", std::string());
  r.format_compliant = j.value("format_compliant", false);
  r.usage_missing = j.value("usage_missing", false);
  r.error = optional_string(j, "error");
  r.truncated = j.value("truncated", false);
  r.forced_answer_text = optional_string(j, "forced_answer_text");
  if (auto f = optional_string(j, "forced_finish_reason")) r.forced_finish_reason = backend::FinishReason::from_wire(*f);
  r.cumulative_text = optional_string(j, "cumulative_text");
  r.continuation_answer = optional_string(j, "continuation_answer");
  return r;
}

bool TrialRecord::same_outcome(const TrialRecord& other) const {
  auto a = to_json();
  auto b = other.to_json();
  a.erase("ts");
  b.erase("ts");
  return a == b;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

}  // namespace ttc
