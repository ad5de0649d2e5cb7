#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttc/config.hpp"
#include "ttc/corpus.hpp"
#include "ttc/record.hpp"

namespace ttc::runstore {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTrialsFile = "trials.jsonl";
inline constexpr const char* kRawCompletionsFile = "raw_completions.jsonl";
inline constexpr const char* kRecordingFile = "recording.jsonl";
inline constexpr const char* kConfigFile = "config.json";

struct RunPartition {
  int index = 0;
  std::string run_id;
  std::optional<std::int64_t> seed;
  bool valid = true;
  std::optional<std::string> exclusion_reason;
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::string model_id;
  Intervention intervention = Intervention::scale_down;
  std::string started;
  std::optional<std::string> finished;
  std::int64_t completed = 0;  // settled trials with a generation
  std::int64_t failed = 0;     // failed + terminal_error
  std::int64_t pending = 0;
  double wall_seconds = 0.0;
  bool valid = true;
  std::optional<std::string> exclusion_reason;
  std::vector<RunPartition> runs;
  std::optional<std::string> recording;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);
};

/// Every (run, problem, budget-or-step) key a sweep must produce, in
/// run-major, problem, then budget/step order.
std::vector<TrialKey> trial_grid(const SweepConfig& config, const corpus::ProblemSet& problems);

/// Append-only run directory. One instance is the single writer for its
/// directory; appends from several threads are serialized internally.
class RunStore {
 public:
  /// Creates the run directory or reopens it. Reopening refuses (with
  /// DigestMismatchError) when the stored config digest differs.
  static std::unique_ptr<RunStore> open(const SweepConfig& config, const corpus::ProblemSet& problems,
                                        const std::filesystem::path& dir);

  /// Opens an existing run directory for reading and manifest edits.
  static std::unique_ptr<RunStore> open_existing(const std::filesystem::path& dir);

  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  RunManifest manifest() const;

  /// Appends one line and flushes. Throws StoreError when the key is already
  /// settled (anything but a failed attempt).
  void append_trial(const TrialRecord& record);
  void append_raw_completion(const nlohmann::ordered_json& entry);

  /// Every line of the trial log, in append order.
  std::vector<TrialRecord> scan() const;
  /// Latest record per key, in first-appearance order of the key.
  std::vector<TrialRecord> effective_records() const;

  /// Keys of `grid` without a settled record. For scale-up trials, steps after
  /// a step that closed its trial (budget_exhausted or terminal_error) are not
  /// pending.
  std::vector<TrialKey> pending_trials(const std::vector<TrialKey>& grid) const;

  void update_manifest(const std::function<void(RunManifest&)>& edit);

  /// Marks run partition `run_id` (or its numeric index) invalid.
  void exclude_run(const std::string& run, const std::string& reason);

  std::filesystem::path trials_path() const { return dir_ / kTrialsFile; }

 private:
  explicit RunStore(std::filesystem::path dir);
  void load_trials();
  void write_manifest_locked() const;

  std::filesystem::path dir_;
  RunManifest manifest_;
  std::map<TrialKey, TrialStatus> status_;
  std::vector<TrialRecord> log_;
  std::ofstream trials_out_;
  std::ofstream raw_out_;
  mutable std::mutex mutex_;
};

}  // namespace ttc::runstore
