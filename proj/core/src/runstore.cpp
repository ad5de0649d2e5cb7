#include "ttc/runstore.hpp"

#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "ttc/error.hpp"

namespace ttc::runstore {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["run_id"] = run_id;
  j["config_digest"] = config_digest;
  j["model_id"] = model_id;
  j["intervention"] = to_string(intervention);
  j["started"] = started;
  j["finished"] = finished ? ordered_json(*finished) : ordered_json(nullptr);
  j["trials"] = {{"completed", completed}, {"failed", failed}, {"pending", pending}};
  j["wall_seconds"] = wall_seconds;
  j["valid"] = valid;
  j["exclusion_reason"] = exclusion_reason ? ordered_json(*exclusion_reason) : ordered_json(nullptr);
  ordered_json runs_json = ordered_json::array();
  for (const auto& r : runs) {
    ordered_json rj;
    rj["index"] = r.index;
    rj["run_id"] = r.run_id;
    rj["seed"] = r.seed ? ordered_json(*r.seed) : ordered_json(nullptr);
    rj["valid"] = r.valid;
    rj["exclusion_reason"] = r.exclusion_reason ? ordered_json(*r.exclusion_reason) : ordered_json(nullptr);
    runs_json.push_back(std::move(rj));
  }
  j["runs"] = std::move(runs_json);
  j["recording"] = recording ? ordered_json(*recording) : ordered_json(nullptr);
  return j;
}

RunManifest RunManifest::from_json(const ordered_json& j) {
  auto opt_string = [](const ordered_json& o, const char* key) -> std::optional<std::string> {
    auto it = o.find(key);
    if (it == o.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
  };
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.model_id = j.value("model_id", std::string());
  m.intervention = intervention_from_string(j.at("intervention").get<std::string>());
  m.started = j.value("started", std::string());
  m.finished = opt_string(j, "finished");
  if (auto t = j.find("trials"); t != j.end()) {
    m.completed = t->value("completed", std::int64_t{0});
    m.failed = t->value("failed", std::int64_t{0});
    m.pending = t->value("pending", std::int64_t{0});
  }
  m.wall_seconds = j.value("wall_seconds", 0.0);
  m.valid = j.value("valid", true);
  m.exclusion_reason = opt_string(j, "exclusion_reason");
  for (const auto& rj : j.value("runs", ordered_json::array())) {
    RunPartition r;
    r.index = rj.at("index").get<int>();
    r.run_id = rj.at("run_id").get<std::string>();
    if (auto s = rj.find("seed"); s != rj.end() && !s->is_null()) r.seed = s->get<std::int64_t>();
    r.valid = rj.value("valid", true);
    r.exclusion_reason = opt_string(rj, "exclusion_reason");
    m.runs.push_back(std::move(r));
  }
  m.recording = opt_string(j, "recording");
  return m;
}

std::vector<TrialKey> trial_grid(const SweepConfig& config, const corpus::ProblemSet& problems) {
  std::vector<TrialKey> grid;
  for (int run = 0; run < config.runs; ++run) {
    for (const auto& p : problems.problems()) {
      if (config.intervention == Intervention::scale_down) {
        for (auto b : config.budgets) grid.push_back({run, p.id, TrialKind::scale_down, b});
      } else {
        for (int k = 0; k <= config.wait_count; ++k) grid.push_back({run, p.id, TrialKind::scale_up, k});
      }
    }
  }
  return grid;
}

namespace {

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StoreError("cannot read " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw StoreError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_file_atomically(const fs::path& path, const std::string& content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw StoreError("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path);
}

std::ofstream open_append(const fs::path& path) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw StoreError("cannot open " + path.string() + " for append");
  return out;
}

}  // namespace

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {}

std::unique_ptr<RunStore> RunStore::open(const SweepConfig& config, const corpus::ProblemSet& problems,
                                         const fs::path& dir) {
  config.validate();
  std::unique_ptr<RunStore> store(new RunStore(dir));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create run directory " + dir.string() + ": " + ec.message());

  const auto digest = config_digest(config, problems);
  const auto manifest_path = dir / kManifestFile;
  if (fs::exists(manifest_path)) {
    store->manifest_ = RunManifest::from_json(read_json_file(manifest_path));
    if (store->manifest_.config_digest != digest) {
      throw DigestMismatchError(store->manifest_.config_digest, digest);
    }
  } else {
    auto& m = store->manifest_;
    m.run_id = config.name;
    m.config_digest = digest;
    m.model_id = config.model_id;
    m.intervention = config.intervention;
    m.started = now_iso8601();
    for (int r = 0; r < config.runs; ++r) m.runs.push_back({r, config.run_id(r), config.seed_for_run(r), true, {}});
    store->write_manifest_locked();
    write_file_atomically(dir / kConfigFile, config.to_json_absolute(fs::current_path()).dump(2) + "\n");
  }
  store->load_trials();
  store->trials_out_ = open_append(store->trials_path());
  store->raw_out_ = open_append(dir / kRawCompletionsFile);
  return store;
}

std::unique_ptr<RunStore> RunStore::open_existing(const fs::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  if (!fs::exists(manifest_path)) throw StoreError("no run at " + dir.string() + " (missing manifest.json)");
  std::unique_ptr<RunStore> store(new RunStore(dir));
  store->manifest_ = RunManifest::from_json(read_json_file(manifest_path));
  store->load_trials();
  store->trials_out_ = open_append(store->trials_path());
  store->raw_out_ = open_append(dir / kRawCompletionsFile);
  return store;
}

void RunStore::load_trials() {
  const auto path = trials_path();
  if (!fs::exists(path)) return;
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    content.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  // An unterminated tail is a write interrupted by a crash; drop it.
  const auto last_newline = content.rfind('\n');
  const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete < content.size()) {
    std::cerr << "warning: dropping partial trailing line in " << path.string() << "\n";
    fs::resize_file(path, complete);
    content.resize(complete);
  }

  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin < content.size()) {
    const auto end = content.find('\n', begin);
    const std::string_view line(content.data() + begin, end - begin);
    begin = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      auto record = TrialRecord::from_json(ordered_json::parse(line));
      status_[record.key()] = record.status;
      log_.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw StoreError(path.string() + " line " + std::to_string(line_no) + " is corrupt: " + e.what());
    }
  }
}

RunManifest RunStore::manifest() const {
  std::lock_guard lock(mutex_);
  return manifest_;
}

void RunStore::append_trial(const TrialRecord& record) {
  const auto key = record.key();
  const auto line = record.to_json().dump() + "\n";
  std::lock_guard lock(mutex_);
  if (auto it = status_.find(key); it != status_.end() && is_settled(it->second)) {
    throw StoreError("duplicate trial key " + key.to_string());
  }
  trials_out_ << line;
  trials_out_.flush();
  if (!trials_out_) throw StoreError("write to " + trials_path().string() + " failed");
  status_[key] = record.status;
  log_.push_back(record);
}

void RunStore::append_raw_completion(const ordered_json& entry) {
  const auto line = entry.dump() + "\n";
  std::lock_guard lock(mutex_);
  raw_out_ << line;
  raw_out_.flush();
}

std::vector<TrialRecord> RunStore::scan() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::vector<TrialRecord> RunStore::effective_records() const {
  std::lock_guard lock(mutex_);
  std::map<TrialKey, std::size_t> latest;
  std::vector<TrialKey> order;
  for (std::size_t i = 0; i < log_.size(); ++i) {
    auto [it, inserted] = latest.insert_or_assign(log_[i].key(), i);
    if (inserted) order.push_back(it->first);
  }
  std::vector<TrialRecord> out;
  out.reserve(order.size());
  for (const auto& k : order) out.push_back(log_[latest.at(k)]);
  return out;
}

std::vector<TrialKey> RunStore::pending_trials(const std::vector<TrialKey>& grid) const {
  std::lock_guard lock(mutex_);
  // (run, problem) -> first step index that closed the Wait loop.
  std::map<std::pair<int, std::string>, std::int64_t> closed_at;
  for (const auto& [key, status] : status_) {
    if (key.kind != TrialKind::scale_up || !closes_trial(status)) continue;
    auto [it, inserted] = closed_at.emplace(std::pair{key.run, key.problem_id}, key.index);
    if (!inserted && key.index < it->second) it->second = key.index;
  }
  std::vector<TrialKey> pending;
  for (const auto& key : grid) {
    if (auto it = status_.find(key); it != status_.end() && is_settled(it->second)) continue;
    if (key.kind == TrialKind::scale_up) {
      auto c = closed_at.find({key.run, key.problem_id});
      if (c != closed_at.end() && key.index > c->second) continue;
    }
    pending.push_back(key);
  }
  return pending;
}

void RunStore::write_manifest_locked() const {
  write_file_atomically(dir_ / kManifestFile, manifest_.to_json().dump(2) + "\n");
}

void RunStore::update_manifest(const std::function<void(RunManifest&)>& edit) {
  std::lock_guard lock(mutex_);
  edit(manifest_);
  write_manifest_locked();
}

void RunStore::exclude_run(const std::string& run, const std::string& reason) {
  if (reason.empty()) throw ValidationError("excluding a run requires a reason");
  std::lock_guard lock(mutex_);
  for (auto& r : manifest_.runs) {
    if (r.run_id == run || std::to_string(r.index) == run) {
      r.valid = false;
      r.exclusion_reason = reason;
      write_manifest_locked();
      return;
    }
  }
  throw ValidationError("run \"" + run + "\" is not part of " + manifest_.run_id);
}

}  // namespace ttc::runstore
