#include "ttc/config.hpp"

#include <fstream>
#include <sstream>

#include "ttc/digest.hpp"
#include "ttc/error.hpp"

namespace ttc {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(Intervention intervention) {
  return intervention == Intervention::scale_down ? "scale_down" : "scale_up";
}

Intervention intervention_from_string(std::string_view text) {
  if (text == "scale_down") return Intervention::scale_down;
  if (text == "scale_up") return Intervention::scale_up;
  throw ConfigError("unknown intervention \"" + std::string(text) + "\" (expected scale_down or scale_up)");
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::live:
      return "live";
    case BackendKind::mock:
      return "mock";
    case BackendKind::replay:
      return "replay";
  }
  return "mock";
}

BackendKind backend_kind_from_string(std::string_view text) {
  if (text == "live") return BackendKind::live;
  if (text == "mock") return BackendKind::mock;
  if (text == "replay") return BackendKind::replay;
  throw ConfigError("unknown backend \"" + std::string(text) + "\" (expected live, mock or replay)");
}

void SweepConfig::validate() const {
  if (name.empty()) throw ConfigError("config: name is empty");
  if (model_id.empty()) throw ConfigError("config: model_id is empty");
  if (problems.empty()) throw ConfigError("config: problems path is empty");
  if (runs < 1) throw ConfigError("config: runs must be >= 1");
  if (concurrency < 1) throw ConfigError("config: concurrency must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("config: temperature must be >= 0");
  if (forced_answer_cap < 1) throw ConfigError("config: forced_answer_cap must be >= 1");
  if (!extra.is_object()) throw ConfigError("config: extra must be an object");
  try {
    profile.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (intervention == Intervention::scale_down) {
    if (budgets.empty()) throw ConfigError("config: scale_down needs at least one budget");
    for (std::size_t i = 0; i < budgets.size(); ++i) {
      if (budgets[i] < 1) throw ConfigError("config: budgets must be >= 1");
      if (i > 0 && budgets[i] <= budgets[i - 1]) throw ConfigError("config: budgets must be strictly increasing");
    }
  } else {
    if (wait_count < 1) throw ConfigError("config: scale_up needs wait_count >= 1");
    if (ceiling_budget < 1) throw ConfigError("config: scale_up needs ceiling_budget >= 1");
  }
  if (backend.max_in_flight < 1) throw ConfigError("config: backend.max_in_flight must be >= 1");
  if (backend.max_attempts < 1) throw ConfigError("config: backend.max_attempts must be >= 1");
}

namespace {

ordered_json profile_json(const transcript::PromptProfile& p) {
  ordered_json j;
  j["solve_system_prompt"] = p.solve_system_prompt;
  j["forced_answer_system_prompt"] = p.forced_answer_system_prompt;
  j["cue"] = p.cue;
  j["forced_layout"] = transcript::to_string(p.forced_layout);
  return j;
}

ordered_json backend_json(const BackendSpec& b, const fs::path& base) {
  auto path = [&](const fs::path& p) -> ordered_json {
    if (p.empty()) return nullptr;
    return (base.empty() || p.is_absolute() ? p : fs::absolute(base / p)).lexically_normal().string();
  };
  ordered_json j;
  j["kind"] = to_string(b.kind);
  if (!b.base_url.empty()) j["base_url"] = b.base_url;
  if (!b.script.empty()) j["script"] = path(b.script);
  if (!b.recording.empty()) j["recording"] = path(b.recording);
  j["max_in_flight"] = b.max_in_flight;
  j["timeout_seconds"] = b.timeout_seconds;
  j["max_attempts"] = b.max_attempts;
  j["initial_backoff_ms"] = b.initial_backoff_ms;
  j["max_temperature"] = b.max_temperature;
  return j;
}

ordered_json config_json(const SweepConfig& c, const fs::path& base) {
  auto path = [&](const fs::path& p) -> std::string {
    return (base.empty() || p.is_absolute() ? p : fs::absolute(base / p)).lexically_normal().string();
  };
  ordered_json j;
  j["name"] = c.name;
  j["intervention"] = to_string(c.intervention);
  j["model_id"] = c.model_id;
  j["problems"] = path(c.problems);
  j["backend"] = backend_json(c.backend, base);
  if (c.intervention == Intervention::scale_down) {
    j["budgets"] = c.budgets;
    j["forced_answer_cap"] = c.forced_answer_cap;
  } else {
    j["wait_count"] = c.wait_count;
    j["ceiling_budget"] = c.ceiling_budget;
  }
  j["temperature"] = c.temperature;
  j["runs"] = c.runs;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
  j["prompt_profile"] = profile_json(c.profile);
  j["extra"] = c.extra;
  j["concurrency"] = c.concurrency;
  if (!c.run_dir.empty()) j["run_dir"] = path(c.run_dir);
  return j;
}

template <typename T>
T get_or(const ordered_json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

ordered_json SweepConfig::to_json() const { return config_json(*this, {}); }

ordered_json SweepConfig::to_json_absolute(const fs::path& base_dir) const { return config_json(*this, base_dir); }

SweepConfig SweepConfig::from_json(const ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  SweepConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.intervention = intervention_from_string(j.at("intervention").get<std::string>());
    c.model_id = j.at("model_id").get<std::string>();
    c.problems = j.at("problems").get<std::string>();
    if (auto b = j.find("backend"); b != j.end()) {
      if (b->is_string()) {
        c.backend.kind = backend_kind_from_string(b->get<std::string>());
      } else {
        c.backend.kind = backend_kind_from_string(get_or<std::string>(*b, "kind", "mock"));
        c.backend.base_url = get_or<std::string>(*b, "base_url", "");
        c.backend.script = get_or<std::string>(*b, "script", "");
        c.backend.recording = get_or<std::string>(*b, "recording", "");
        c.backend.max_in_flight = get_or(*b, "max_in_flight", c.backend.max_in_flight);
        c.backend.timeout_seconds = get_or(*b, "timeout_seconds", c.backend.timeout_seconds);
        c.backend.max_attempts = get_or(*b, "max_attempts", c.backend.max_attempts);
        c.backend.initial_backoff_ms = get_or(*b, "initial_backoff_ms", c.backend.initial_backoff_ms);
        c.backend.max_temperature = get_or(*b, "max_temperature", c.backend.max_temperature);
      }
    }
    c.budgets = get_or(j, "budgets", std::vector<std::int64_t>{});
    c.wait_count = get_or(j, "wait_count", 0);
    c.ceiling_budget = get_or(j, "ceiling_budget", std::int64_t{0});
    c.forced_answer_cap = get_or(j, "forced_answer_cap", c.forced_answer_cap);
    c.temperature = get_or(j, "temperature", 0.0);
    c.runs = get_or(j, "runs", 1);
    if (auto s = j.find("seed"); s != j.end() && !s->is_null()) c.seed = s->get<std::int64_t>();
    if (auto p = j.find("prompt_profile"); p != j.end() && !p->is_null()) {
      c.profile.solve_system_prompt = get_or(*p, "solve_system_prompt", c.profile.solve_system_prompt);
      c.profile.forced_answer_system_prompt =
          get_or(*p, "forced_answer_system_prompt", c.profile.forced_answer_system_prompt);
      c.profile.cue = get_or(*p, "cue", c.profile.cue);
      if (auto l = p->find("forced_layout"); l != p->end()) {
        c.profile.forced_layout = transcript::forced_layout_from_string(l->get<std::string>());
      }
    }
    if (auto e = j.find("extra"); e != j.end() && !e->is_null()) c.extra = *e;
    c.concurrency = get_or(j, "concurrency", 1);
    c.run_dir = get_or<std::string>(j, "run_dir", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

SweepConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto c = SweepConfig::from_json(j);
  const auto base = fs::absolute(path).parent_path();
  auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
  };
  resolve(c.problems);
  resolve(c.backend.script);
  resolve(c.backend.recording);
  resolve(c.run_dir);
  return c;
}

std::string config_digest(const SweepConfig& config, const corpus::ProblemSet& problems) {
  nlohmann::json j = nlohmann::json(config.to_json());
  j.erase("backend");
  j.erase("concurrency");
  j.erase("run_dir");
  j.erase("problems");
  j["problem_set"] = sha256_hex(corpus::serialize_problem_set(problems));
  return sha256_hex(canonical_dump(j));
}

}  // namespace ttc
