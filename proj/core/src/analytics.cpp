#include "ttc/analytics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

#include "strings.hpp"
#include "ttc/error.hpp"

namespace ttc::analytics {
namespace {

using i128 = __int128;

std::int64_t narrow(i128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw Error("ratio overflow");
  return static_cast<std::int64_t>(v);
}

i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    const i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

Ratio make(i128 num, i128 den) {
  const i128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Ratio(narrow(num), narrow(den));
}

}  // namespace

Ratio::Ratio(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
  if (den <= 0) throw ValidationError("ratio denominator must be positive");
  if (num < 0) throw ValidationError("ratio must be non-negative");
  const auto g = std::gcd(num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

Ratio Ratio::operator+(const Ratio& rhs) const {
  return make(static_cast<i128>(num_) * rhs.den_ + static_cast<i128>(rhs.num_) * den_,
              static_cast<i128>(den_) * rhs.den_);
}

Ratio Ratio::divided_by(std::int64_t n) const {
  if (n <= 0) throw ValidationError("ratio divisor must be positive");
  return make(num_, static_cast<i128>(den_) * n);
}

std::string Ratio::format_1dp() const {
  const i128 tenths = (static_cast<i128>(num_) * 20 + den_) / (static_cast<i128>(den_) * 2);
  const auto t = narrow(tenths);
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

Ratio accuracy_percent(std::string_view cell, const std::vector<bool>& correct) {
  if (correct.empty()) throw ValidationError("no trials in cell " + std::string(cell));
  const auto hits = std::count(correct.begin(), correct.end(), true);
  return Ratio::percent(hits, static_cast<std::int64_t>(correct.size()));
}

std::vector<AccuracyPoint> accuracy_points(const std::vector<TrialRecord>& records) {
  std::map<std::int64_t, std::vector<bool>> cells;
  for (const auto& r : records) cells[r.index].push_back(r.correct);
  std::vector<AccuracyPoint> out;
  for (const auto& [index, correct] : cells) {
    out.push_back({index, accuracy_percent(std::to_string(index), correct)});
  }
  return out;
}

std::vector<AccuracyPoint> accuracy_points(const std::vector<TrialRecord>& records,
                                           const std::vector<std::int64_t>& expected) {
  std::map<std::int64_t, std::vector<bool>> cells;
  for (auto index : expected) cells[index];
  for (const auto& r : records) cells[r.index].push_back(r.correct);
  std::vector<AccuracyPoint> out;
  for (const auto& [index, correct] : cells) {
    out.push_back({index, accuracy_percent(std::to_string(index), correct)});
  }
  return out;
}

FlipProfile flip_profile(const LabelSequence& sequence) {
  FlipProfile p;
  for (std::size_t k = 0; k + 1 < sequence.labels.size(); ++k) {
    if (sequence.labels[k] != sequence.labels[k + 1]) ++p.flips;
  }
  p.oscillating = p.flips >= 2;
  return p;
}

namespace {

template <typename T>
std::map<std::string, const T*> index_by_problem(const std::vector<T>& items, const char* what) {
  std::map<std::string, const T*> out;
  for (const auto& item : items) {
    if (!out.emplace(item.problem_id, &item).second) {
      throw ValidationError(std::string(what) + ": problem \"" + item.problem_id + "\" appears twice");
    }
  }
  return out;
}

template <typename T>
void require_same_coverage(const std::map<std::string, const T*>& a, const std::map<std::string, const T*>& b,
                           const char* what) {
  if (a.size() != b.size() ||
      !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw ValidationError(std::string(what) + ": the two steps cover different problems");
  }
  if (a.empty()) throw ValidationError(std::string(what) + ": no problems");
}

}  // namespace

Ratio answer_unchanged_rate(const std::vector<StepAnswer>& previous, const std::vector<StepAnswer>& current) {
  const auto prev = index_by_problem(previous, "answer_unchanged_rate");
  const auto cur = index_by_problem(current, "answer_unchanged_rate");
  require_same_coverage(prev, cur, "answer_unchanged_rate");
  std::int64_t unchanged = 0;
  for (const auto& [id, p] : prev) {
    if (p->answer == cur.at(id)->answer) ++unchanged;
  }
  return Ratio::percent(unchanged, static_cast<std::int64_t>(prev.size()));
}

Ratio response_repetition_rate(const std::vector<StepResponse>& previous, const std::vector<StepResponse>& current) {
  const auto prev = index_by_problem(previous, "response_repetition_rate");
  const auto cur = index_by_problem(current, "response_repetition_rate");
  require_same_coverage(prev, cur, "response_repetition_rate");
  std::int64_t repeated = 0;
  for (const auto& [id, p] : prev) {
    const auto& c = cur.at(id)->text;
    if (p->text && c && detail::trim(*p->text) == detail::trim(*c)) ++repeated;
  }
  return Ratio::percent(repeated, static_cast<std::int64_t>(prev.size()));
}

std::string MetricsTable::header_csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i > 0) out += ',';
    out += columns[i];
  }
  return out;
}

std::string MetricsTable::row_csv() const {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += values[i].format_1dp();
  }
  return out;
}

MetricsTable aggregate_runs(const std::vector<RunMetrics>& runs, const std::vector<Exclusion>& exclusions) {
  if (runs.empty()) throw ValidationError("aggregate_runs: no runs");
  std::map<std::string, std::string> excluded;
  for (const auto& e : exclusions) {
    const bool known =
        std::any_of(runs.begin(), runs.end(), [&](const RunMetrics& r) { return r.run_id == e.run_id; });
    if (!known) throw ValidationError("aggregate_runs: excluded run \"" + e.run_id + "\" is unknown");
    excluded.emplace(e.run_id, e.reason);
  }

  MetricsTable table;
  for (const auto& [column, value] : runs.front().cells) table.columns.push_back(column);
  std::vector<Ratio> sums(table.columns.size());
  for (const auto& run : runs) {
    if (run.cells.size() != table.columns.size()) {
      throw ValidationError("aggregate_runs: run \"" + run.run_id + "\" has a different column set");
    }
    for (std::size_t i = 0; i < run.cells.size(); ++i) {
      if (run.cells[i].first != table.columns[i]) {
        throw ValidationError("aggregate_runs: run \"" + run.run_id + "\" has a different column set");
      }
    }
    if (auto it = excluded.find(run.run_id); it != excluded.end()) {
      table.excluded.push_back({run.run_id, it->second});
      continue;
    }
    for (std::size_t i = 0; i < run.cells.size(); ++i) sums[i] = sums[i] + run.cells[i].second;
    ++table.runs_used;
  }
  if (table.runs_used == 0) throw ValidationError("aggregate_runs: every run is excluded");
  for (const auto& s : sums) table.values.push_back(s.divided_by(table.runs_used));
  return table;
}

// ---------------------------------------------------------------------------

ScaleUpView scale_up_view(const std::vector<TrialRecord>& records, int wait_count) {
  std::map<int, std::map<std::string, std::map<std::int64_t, const TrialRecord*>>> grouped;
  for (const auto& r : records) {
    if (r.kind != TrialKind::scale_up) continue;
    grouped[r.run_index][r.problem_id][r.index] = &r;
  }
  ScaleUpView view;
  for (const auto& [run, problems] : grouped) {
    for (const auto& [problem_id, steps] : problems) {
      std::vector<StepView> out;
      out.reserve(static_cast<std::size_t>(wait_count) + 1);
      StepView carried;
      for (int k = 0; k <= wait_count; ++k) {
        auto it = steps.find(k);
        const bool usable = it != steps.end() && (it->second->status == TrialStatus::ok ||
                                                  it->second->status == TrialStatus::budget_exhausted);
        if (usable) {
          StepView s;
          s.answer = it->second->extracted_answer;
          s.correct = it->second->correct;
          s.continuation = it->second->text;
          s.generated = true;
          carried = s;
          out.push_back(std::move(s));
        } else {
          StepView s;
          s.answer = carried.answer;
          s.correct = carried.correct;
          out.push_back(std::move(s));
        }
      }
      view[run][problem_id] = std::move(out);
    }
  }
  return view;
}

std::vector<std::string> repetition_columns(int wait_count) {
  std::vector<std::string> columns{"acc_init"};
  for (int k = 1; k <= wait_count; ++k) columns.push_back("acc_wait" + std::to_string(k));
  for (int k = 1; k <= wait_count; ++k) columns.push_back("ans_rep_wait" + std::to_string(k));
  for (int k = 2; k <= wait_count; ++k) columns.push_back("resp_rep_wait" + std::to_string(k));
  return columns;
}

std::vector<RunMetrics> scale_up_run_metrics(const ScaleUpView& view, int wait_count,
                                             const std::map<int, std::string>& run_ids) {
  if (wait_count < 1) throw ValidationError("repetition metrics need at least one Wait step");
  std::vector<RunMetrics> out;
  for (const auto& [run, problems] : view) {
    RunMetrics m;
    auto id = run_ids.find(run);
    m.run_id = id != run_ids.end() ? id->second : std::to_string(run);

    auto answers_at = [&](int k) {
      std::vector<StepAnswer> v;
      for (const auto& [pid, steps] : problems) v.push_back({pid, steps[static_cast<std::size_t>(k)].answer});
      return v;
    };
    auto responses_at = [&](int k) {
      std::vector<StepResponse> v;
      for (const auto& [pid, steps] : problems) {
        const auto& s = steps[static_cast<std::size_t>(k)];
        v.push_back({pid, s.generated ? std::optional<std::string>(s.continuation) : std::nullopt});
      }
      return v;
    };

    for (int k = 0; k <= wait_count; ++k) {
      std::vector<bool> correct;
      for (const auto& [pid, steps] : problems) correct.push_back(steps[static_cast<std::size_t>(k)].correct);
      m.cells.emplace_back(k == 0 ? "acc_init" : "acc_wait" + std::to_string(k),
                           accuracy_percent(m.run_id + " step " + std::to_string(k), correct));
    }
    for (int k = 1; k <= wait_count; ++k) {
      m.cells.emplace_back("ans_rep_wait" + std::to_string(k), answer_unchanged_rate(answers_at(k - 1), answers_at(k)));
    }
    for (int k = 2; k <= wait_count; ++k) {
      m.cells.emplace_back("resp_rep_wait" + std::to_string(k),
                           response_repetition_rate(responses_at(k - 1), responses_at(k)));
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<LabelSequence> label_sequences(const std::map<std::string, std::vector<StepView>>& run) {
  std::vector<LabelSequence> out;
  for (const auto& [pid, steps] : run) {
    LabelSequence seq{pid, {}};
    for (const auto& s : steps) seq.labels.push_back(s.correct);
    out.push_back(std::move(seq));
  }
  return out;
}

bool looks_like_gibberish(std::string_view text) {
  if (text.empty()) return false;
  std::size_t control = 0;
  std::size_t longest_run = 1;
  std::size_t run = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x20 && c != '\n' && c != '\t' && c != '\r') ++control;
    if (i > 0 && text[i] == text[i - 1] && !detail::is_space(text[i])) {
      longest_run = std::max(longest_run, ++run);
    } else {
      run = 1;
    }
  }
  if (static_cast<double>(control) / static_cast<double>(text.size()) > 0.05) return true;
  if (longest_run >= 40) return true;

  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_space(text[i])) ++i;
    const auto begin = i;
    while (i < text.size() && !detail::is_space(text[i])) ++i;
    if (i > begin) words.push_back(text.substr(begin, i - begin));
  }
  if (words.size() >= 40) {
    const std::set<std::string_view> distinct(words.begin(), words.end());
    if (static_cast<double>(distinct.size()) / static_cast<double>(words.size()) < 0.1) return true;
  }
  return false;
}

std::vector<GibberishWarning> gibberish_warnings(const std::vector<TrialRecord>& records, double threshold) {
  std::map<std::string, GibberishWarning> by_run;
  for (const auto& r : records) {
    auto& w = by_run[r.run_id];
    w.run_id = r.run_id;
    ++w.total;
    if (looks_like_gibberish(r.text)) ++w.flagged;
  }
  std::vector<GibberishWarning> out;
  for (const auto& [id, w] : by_run) {
    if (w.total > 0 && static_cast<double>(w.flagged) / static_cast<double>(w.total) > threshold) out.push_back(w);
  }
  return out;
}

}  // namespace ttc::analytics
