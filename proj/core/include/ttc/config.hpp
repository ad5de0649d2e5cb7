#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttc/corpus.hpp"
#include "ttc/transcript.hpp"

namespace ttc {

enum class Intervention { scale_down, scale_up };

std::string_view to_string(Intervention intervention);
Intervention intervention_from_string(std::string_view text);

enum class BackendKind { live, mock, replay };

std::string_view to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view text);

struct BackendSpec {
  BackendKind kind = BackendKind::mock;
  std::string base_url;           // live
  std::filesystem::path script;     // mock
  std::filesystem::path recording;  // replay; defaults to <run_dir>/recording.jsonl
  int max_in_flight = 4;
  int timeout_seconds = 600;
  int max_attempts = 4;
  int initial_backoff_ms = 500;
  double max_temperature = 2.0;
};

/// One sweep: a model, a problem set, an intervention and its grid.
///
/// Relative paths in the config file resolve against the file's directory.
struct SweepConfig {
  std::string name;
  Intervention intervention = Intervention::scale_down;
  std::string model_id;
  std::filesystem::path problems;
  BackendSpec backend;

  std::vector<std::int64_t> budgets;   // scale_down
  int wait_count = 0;                  // scale_up
  std::int64_t ceiling_budget = 0;     // scale_up
  std::int64_t forced_answer_cap = 64;

  double temperature = 0.0;
  int runs = 1;
  std::optional<std::int64_t> seed;
  transcript::PromptProfile profile;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  int concurrency = 1;
  std::filesystem::path run_dir;  // empty: runs/<name> under the working directory

  /// Throws ConfigError on violated invariants (budgets strictly increasing,
  /// K >= 1, runs >= 1, ...).
  void validate() const;

  /// run_id of run partition `run`.
  std::string run_id(int run) const { return name + "-r" + std::to_string(run); }
  std::optional<std::int64_t> seed_for_run(int run) const {
    return seed ? std::optional<std::int64_t>(*seed + run) : std::nullopt;
  }

  /// Full serialization, paths written as given.
  nlohmann::ordered_json to_json() const;
  /// Same as to_json() with every path made absolute.
  nlohmann::ordered_json to_json_absolute(const std::filesystem::path& base_dir) const;
  static SweepConfig from_json(const nlohmann::ordered_json& j);
};

/// Reads a JSON config file and resolves its relative paths.
SweepConfig load_config(const std::filesystem::path& path);

/// Digest of everything that determines trial outcomes: the canonical
/// config minus operational settings (backend, concurrency, run_dir) plus
/// the problem set content.
std::string config_digest(const SweepConfig& config, const corpus::ProblemSet& problems);

}  // namespace ttc
