#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "ttc/backend.hpp"
#include "ttc/config.hpp"
#include "ttc/corpus.hpp"
#include "ttc/error.hpp"
#include "ttc/http_backend.hpp"
#include "ttc/intervene.hpp"
#include "ttc/report.hpp"
#include "ttc/runstore.hpp"

namespace ttc::cli {

namespace fs = std::filesystem;

namespace {

// CLI11 consumes a reversed argument vector.
bool parse(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int& code) {
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    code = kExitOk;
    return false;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    code = kExitError;
    return false;
  }
  return true;
}

std::vector<std::int64_t> parse_budgets(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("--budgets: \"" + item + "\" is not an integer");
    }
  }
  return out;
}

fs::path default_run_dir(const SweepConfig& config) {
  if (!config.run_dir.empty()) return config.run_dir;
  return fs::path("runs") / config.name;
}

std::shared_ptr<backend::Backend> make_backend(const SweepConfig& config, const fs::path& run_dir) {
  switch (config.backend.kind) {
    case BackendKind::mock:
      if (config.backend.script.empty()) throw ConfigError("mock backend needs backend.script");
      return std::make_shared<backend::MockBackend>(backend::load_script(config.backend.script));
    case BackendKind::replay: {
      const auto recording =
          config.backend.recording.empty() ? run_dir / runstore::kRecordingFile : config.backend.recording;
      if (!fs::exists(recording)) throw ConfigError("replay backend: recording " + recording.string() + " not found");
      return std::make_shared<backend::ReplayBackend>(recording);
    }
    case BackendKind::live: {
      if (config.backend.base_url.empty()) throw ConfigError("live backend needs backend.base_url");
      backend::HttpOptions http;
      http.base_url = config.backend.base_url;
      http.model_id = config.model_id;
      http.timeout_seconds = config.backend.timeout_seconds;
      http.max_in_flight = config.backend.max_in_flight;
      http.max_temperature = config.backend.max_temperature;
      backend::RetryPolicy retry;
      retry.max_attempts = config.backend.max_attempts;
      retry.initial_backoff = std::chrono::milliseconds(config.backend.initial_backoff_ms);
      return std::make_shared<backend::RetryingBackend>(std::make_shared<backend::HttpBackend>(http), retry);
    }
  }
  throw ConfigError("unknown backend kind");
}

void print_manifest(std::ostream& out, const runstore::RunManifest& m, std::int64_t executed) {
  out << "run " << m.run_id << " (" << to_string(m.intervention) << ", model " << m.model_id << ")\n"
      << "  config digest " << m.config_digest << "\n"
      << "  executed " << executed << " trials this invocation\n"
      << "  completed " << m.completed << ", failed " << m.failed << ", pending " << m.pending << "\n"
      << "  wall time " << m.wall_seconds << " s\n";
}

}  // namespace

int cmd_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Run a scale-down or scale-up sweep", "ttc run"};
  std::string config_path;
  std::string backend_name;
  std::optional<std::string> record;
  std::string run_dir_flag;
  std::optional<double> temperature;
  std::string budgets;
  std::optional<int> wait_count;
  std::optional<int> runs;
  std::optional<int> concurrency;
  std::optional<std::int64_t> max_trials;
  app.add_option("--config", config_path, "Sweep config file (JSON)")->required();
  app.add_option("--backend", backend_name, "Override the configured backend")
      ->check(CLI::IsMember({"live", "mock", "replay"}));
  app.add_option("--record", record, "Record every completion (default <run-dir>/recording.jsonl)")
      ->expected(0, 1);
  app.add_option("--run-dir", run_dir_flag, "Run directory (default from config, else runs/<name>)");
  app.add_option("--temperature", temperature, "Override temperature");
  app.add_option("--budgets", budgets, "Override budgets, comma separated");
  app.add_option("--wait-count", wait_count, "Override number of Wait cues (K)");
  app.add_option("--runs", runs, "Override number of runs");
  app.add_option("--concurrency", concurrency, "Override the in-flight problem bound");
  app.add_option("--max-trials", max_trials, "Stop after appending this many trials");
  int code = kExitOk;
  if (!parse(app, args, out, err, code)) return code;
  const bool recording = app.count("--record") > 0;

  try {
    auto config = load_config(config_path);
    if (!backend_name.empty()) config.backend.kind = backend_kind_from_string(backend_name);
    if (temperature) config.temperature = *temperature;
    if (!budgets.empty()) config.budgets = parse_budgets(budgets);
    if (wait_count) config.wait_count = *wait_count;
    if (runs) config.runs = *runs;
    if (concurrency) config.concurrency = *concurrency;
    if (!run_dir_flag.empty()) config.run_dir = fs::absolute(run_dir_flag);
    config.validate();
    if (recording && config.backend.kind == BackendKind::replay) {
      err << "error: --record cannot be combined with the replay backend\n";
      return kExitError;
    }

    const auto problems = corpus::load_problem_set(config.problems);
    const auto run_dir = default_run_dir(config);
    auto store = runstore::RunStore::open(config, problems, run_dir);
    out << "config digest " << store->manifest().config_digest << "\n";

    auto backend = make_backend(config, run_dir);
    if (recording) {
      const fs::path path = record && !record->empty() ? fs::path(*record) : run_dir / runstore::kRecordingFile;
      auto sink = std::make_shared<backend::RecordingSink>(path);
      backend = std::make_shared<backend::RecordingBackend>(backend, sink);
      store->update_manifest([&](runstore::RunManifest& m) { m.recording = fs::absolute(path).string(); });
    }

    intervene::SweepOptions options;
    options.trial_limit = max_trials;
    const auto result = intervene::run_sweep(config, problems, *store, *backend, options);
    print_manifest(out, result.manifest, result.executed);
    return result.pending == 0 ? kExitOk : kExitPartial;
  } catch (const DigestMismatchError& e) {
    err << "error: refusing to resume: the run directory belongs to a different config\n"
        << "  stored digest: " << e.stored() << "\n"
        << "  config digest: " << e.requested() << "\n";
    return kExitError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cmd_analyze(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compute scaling curves, repetition tables and oscillation profiles", "ttc analyze"};
  std::string run_dir;
  std::string out_dir;
  std::vector<std::string> excludes;
  app.add_option("--run", run_dir, "Run directory")->required();
  app.add_option("--out", out_dir, "Output directory")->required();
  app.add_option("--exclude-run", excludes, "Exclude a run: <run-id-or-index>:<reason>");
  int code = kExitOk;
  if (!parse(app, args, out, err, code)) return code;

  try {
    if (!fs::is_directory(run_dir)) {
      err << "error: run directory " << run_dir << " does not exist\n";
      return kExitError;
    }
    report::AnalyzeOptions options;
    for (const auto& e : excludes) {
      const auto colon = e.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == e.size()) {
        err << "error: --exclude-run expects <run>:<reason>, got \"" << e << "\"\n";
        return kExitError;
      }
      options.exclusions.push_back({e.substr(0, colon), e.substr(colon + 1)});
    }
    const auto store = runstore::RunStore::open_existing(run_dir);
    const auto analysis = report::analyze(*store, options);
    for (const auto& w : analysis.warnings) err << "warning: " << w << "\n";
    for (const auto& path : report::write_analysis(analysis, out_dir)) out << "wrote " << path.string() << "\n";
    if (analysis.refusal) {
      err << "error: " << *analysis.refusal << "\n";
      return kExitError;
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cmd_verify(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Re-execute a recorded run against its recording and diff the trial records", "ttc verify"};
  std::string run_dir;
  app.add_option("--run", run_dir, "Run directory")->required();
  int code = kExitOk;
  if (!parse(app, args, out, err, code)) return code;

  fs::path scratch;
  try {
    if (!fs::is_directory(run_dir)) {
      err << "error: run directory " << run_dir << " does not exist\n";
      return kExitError;
    }
    const auto original = runstore::RunStore::open_existing(run_dir);
    const auto manifest = original->manifest();
    const fs::path recording =
        manifest.recording ? fs::path(*manifest.recording) : fs::path(run_dir) / runstore::kRecordingFile;
    if (!fs::exists(recording)) {
      err << "error: run " << manifest.run_id << " has no recording\n";
      return kExitError;
    }
    const auto config_path = fs::path(run_dir) / runstore::kConfigFile;
    if (!fs::exists(config_path)) {
      err << "error: run " << manifest.run_id << " has no config.json\n";
      return kExitError;
    }
    auto config = load_config(config_path);
    const auto problems = corpus::load_problem_set(config.problems);

    std::random_device rd;
    scratch = fs::temp_directory_path() / ("ttc-verify-" + std::to_string(rd()) + std::to_string(rd()));
    auto replayed_store = runstore::RunStore::open(config, problems, scratch);
    backend::ReplayBackend replay(recording);
    intervene::run_sweep(config, problems, *replayed_store, replay);

    std::map<TrialKey, TrialRecord> expected;
    for (auto& r : original->effective_records()) expected.emplace(r.key(), std::move(r));
    std::map<TrialKey, TrialRecord> actual;
    for (auto& r : replayed_store->effective_records()) actual.emplace(r.key(), std::move(r));
    replayed_store.reset();
    fs::remove_all(scratch);
    scratch.clear();

    std::set<TrialKey> keys;
    for (const auto& [k, r] : expected) keys.insert(k);
    for (const auto& [k, r] : actual) keys.insert(k);
    for (const auto& k : keys) {
      const auto e = expected.find(k);
      const auto a = actual.find(k);
      if (e == expected.end() || a == actual.end() || !e->second.same_outcome(a->second)) {
        err << "mismatch at " << k.to_string() << "\n";
        return kExitMismatch;
      }
    }
    out << "verified " << keys.size() << " trial records against " << recording.string() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    if (!scratch.empty()) fs::remove_all(scratch);
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const std::string usage =
      "usage: ttc <command> [options]\n"
      "commands:\n"
      "  run      run or resume a sweep\n"
      "  analyze  write scaling_curve.csv, repetition_table.csv, oscillation.csv\n"
      "  verify   replay a recorded run and diff its trial records\n";
  if (argc < 2) {
    err << usage;
    return kExitError;
  }
  const std::string command = argv[1];
  std::vector<std::string> args(argv + 2, argv + argc);
  if (command == "run") return cmd_run(args, out, err);
  if (command == "analyze") return cmd_analyze(args, out, err);
  if (command == "verify") return cmd_verify(args, out, err);
  if (command == "-h" || command == "--help") {
    out << usage;
    return kExitOk;
  }
  err << "unknown command \"" << command << "\"\n" << usage;
  return kExitError;
}

}  // namespace ttc::cli
