#include "ttc/report.hpp"

#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "ttc/error.hpp"

namespace ttc::report {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

int wait_count_of(const runstore::RunStore& store, const std::vector<TrialRecord>& records) {
  const auto config_path = store.dir() / runstore::kConfigFile;
  if (fs::exists(config_path)) {
    std::ifstream in(config_path);
    const auto j = ordered_json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_object() && j.contains("wait_count")) return j["wait_count"].get<int>();
  }
  std::int64_t max_step = 0;
  for (const auto& r : records) max_step = std::max(max_step, r.index);
  return static_cast<int>(max_step);
}

std::string resolve_run(const runstore::RunManifest& manifest, const std::string& id) {
  for (const auto& r : manifest.runs) {
    if (r.run_id == id || std::to_string(r.index) == id) return r.run_id;
  }
  throw ValidationError("unknown run \"" + id + "\" in " + manifest.run_id);
}

std::string labels_string(const std::vector<bool>& labels) {
  std::string s;
  for (bool b : labels) s.push_back(b ? 'T' : 'F');
  return s;
}

}  // namespace

Analysis analyze(const runstore::RunStore& store, const AnalyzeOptions& options) {
  const auto manifest = store.manifest();
  const auto records = store.effective_records();
  Analysis out;

  // Exclusions: manifest first, then operator flags; one entry per run.
  std::map<std::string, std::string> excluded;
  for (const auto& r : manifest.runs) {
    if (!r.valid) excluded.emplace(r.run_id, r.exclusion_reason.value_or("marked invalid"));
  }
  for (const auto& e : options.exclusions) {
    if (e.reason.empty()) throw ValidationError("exclusion of run \"" + e.run_id + "\" needs a reason");
    excluded.insert_or_assign(resolve_run(manifest, e.run_id), e.reason);
  }
  std::vector<analytics::Exclusion> exclusions;
  for (const auto& [id, reason] : excluded) exclusions.push_back({id, reason});

  std::map<int, std::string> run_ids;
  for (const auto& r : manifest.runs) run_ids[r.index] = r.run_id;
  for (const auto& r : records) run_ids.emplace(r.run_index, r.run_id);

  for (const auto& r : records) {
    if (r.status == TrialStatus::failed || r.status == TrialStatus::terminal_error) {
      out.warnings.push_back("trial " + r.key().to_string() + " has status " + std::string(to_string(r.status)) +
                             "; counted as incorrect");
    }
  }
  if (manifest.pending > 0) {
    out.warnings.push_back(std::to_string(manifest.pending) + " trials were still pending at the last run");
  }
  for (const auto& w : analytics::gibberish_warnings(records)) {
    if (excluded.contains(w.run_id)) continue;
    out.warnings.push_back("run " + w.run_id + " looks nonsensical (" + std::to_string(w.flagged) + "/" +
                           std::to_string(w.total) + " texts flagged); consider --exclude-run " + w.run_id +
                           ":<reason>");
  }

  // Scaling curve: per-run accuracy per budget/step, averaged over valid runs.
  std::vector<analytics::RunMetrics> curve_runs;
  std::string index_header;
  int wait_count = 0;
  analytics::ScaleUpView view;
  if (manifest.intervention == Intervention::scale_down) {
    index_header = "budget";
    std::map<int, std::vector<TrialRecord>> by_run;
    for (const auto& r : records) {
      if (r.kind == TrialKind::scale_down) by_run[r.run_index].push_back(r);
    }
    std::set<std::int64_t> budgets;
    for (const auto& r : records) budgets.insert(r.index);
    for (const auto& [run, rs] : by_run) {
      analytics::RunMetrics m{run_ids.at(run), {}};
      for (const auto& p : analytics::accuracy_points(rs, {budgets.begin(), budgets.end()})) {
        m.cells.emplace_back(std::to_string(p.index), p.percent);
      }
      curve_runs.push_back(std::move(m));
    }
  } else {
    index_header = "step";
    wait_count = wait_count_of(store, records);
    view = analytics::scale_up_view(records, wait_count);
    for (const auto& [run, problems] : view) {
      analytics::RunMetrics m{run_ids.at(run), {}};
      for (int k = 0; k <= wait_count; ++k) {
        std::vector<bool> correct;
        for (const auto& [pid, steps] : problems) correct.push_back(steps[static_cast<std::size_t>(k)].correct);
        m.cells.emplace_back(std::to_string(k),
                             analytics::accuracy_percent(m.run_id + " step " + std::to_string(k), correct));
      }
      curve_runs.push_back(std::move(m));
    }
  }
  if (curve_runs.empty()) throw ValidationError("run " + manifest.run_id + " has no trial records");

  const auto curve = analytics::aggregate_runs(curve_runs, exclusions);
  out.scaling_curve_csv = index_header + ",accuracy_percent\n";
  for (std::size_t i = 0; i < curve.columns.size(); ++i) {
    out.scaling_curve_csv += curve.columns[i] + "," + curve.values[i].format_1dp() + "\n";
  }

  if (manifest.intervention == Intervention::scale_up) {
    std::string osc = "problem_id,flips,labels,oscillating,run_id\n";
    for (const auto& [run, problems] : view) {
      const auto& run_id = run_ids.at(run);
      if (excluded.contains(run_id)) continue;
      for (const auto& seq : analytics::label_sequences(problems)) {
        const auto p = analytics::flip_profile(seq);
        osc += seq.problem_id + "," + std::to_string(p.flips) + "," + labels_string(seq.labels) + "," +
               (p.oscillating ? "true" : "false") + "," + run_id + "\n";
      }
    }
    out.oscillation_csv = std::move(osc);

    if (wait_count < 1) {
      out.refusal = "repetition_table needs at least one Wait step; run " + manifest.run_id +
                    " only has the initial response";
    } else {
      const auto table =
          analytics::aggregate_runs(analytics::scale_up_run_metrics(view, wait_count, run_ids), exclusions);
      out.repetition_table_csv = table.header_csv() + "\n" + table.row_csv() + "\n";
      out.table = table;
    }
  }

  ordered_json meta;
  meta["run_id"] = manifest.run_id;
  meta["model_id"] = manifest.model_id;
  meta["intervention"] = to_string(manifest.intervention);
  meta["config_digest"] = manifest.config_digest;
  meta["runs_used"] = curve.runs_used;
  ordered_json ex = ordered_json::array();
  for (const auto& e : curve.excluded) ex.push_back({{"run_id", e.run_id}, {"reason", e.reason}});
  meta["excluded_runs"] = std::move(ex);
  meta["rounding"] = "half-up to one decimal, applied once after averaging runs";
  if (manifest.intervention == Intervention::scale_up) {
    meta["wait_count"] = wait_count;
    meta["answer_window"] = "last boxed answer in the cumulative assistant text";
    meta["response_match"] = "exact match after trimming leading and trailing whitespace";
    meta["answer_match"] = "canonical equality; both absent counts as unchanged";
  }
  meta["warnings"] = out.warnings;
  out.meta_json = meta.dump(2) + "\n";
  return out;
}

std::vector<fs::path> write_analysis(const Analysis& analysis, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto write = [&](const char* name, const std::string& content) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + path.string());
    out << content;
    written.push_back(path);
  };
  write(kScalingCurveFile, analysis.scaling_curve_csv);
  if (analysis.repetition_table_csv) write(kRepetitionTableFile, *analysis.repetition_table_csv);
  if (analysis.oscillation_csv) write(kOscillationFile, *analysis.oscillation_csv);
  write(kMetaFile, analysis.meta_json);
  return written;
}

}  // namespace ttc::report
