// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "store_fixtures.hpp"
#include "test_support.hpp"
#include "ttc/analytics.hpp"
#include "ttc/backend.hpp"
#include "ttc/intervene.hpp"
#include "ttc/report.hpp"
#include "ttc/transcript.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ttc;
using testing::kDataDir;
using testing::kFixturesDir;
using testing::kPresetsDir;
using testing::read_file;
using testing::TempDir;

struct Failure {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Half-up percentage at one decimal, computed with plain integer arithmetic.
std::string oracle_percent(std::int64_t count, std::int64_t total) {
  const std::int64_t tenths = (2000 * count + total) / (2 * total);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

// 1. Scale-down accuracy equals the share of problems whose required length fits the budget.
void scale_down_oracle_curve() {
  const auto start = std::chrono::steady_clock::now();
  auto config = load_config(kPresetsDir / "scale_down_toy.json");
  const auto problems = corpus::load_problem_set(config.problems);

  std::vector<std::int64_t> lengths;
  std::ifstream script(config.backend.script);
  for (std::string line; std::getline(script, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("kind") == "scale_down") lengths.push_back(j.at("required_length").get<std::int64_t>());
  }
  check(lengths.size() == problems.size(), "script has one scale_down entry per problem");

  std::set<std::int64_t> budgets{32, 4096};
  for (auto l : lengths) budgets.insert({l - 1, l, l + 1});
  config.budgets.assign(budgets.begin(), budgets.end());

  TempDir dir;
  auto store = runstore::RunStore::open(config, problems, dir.path());
  backend::MockBackend mock(backend::load_script(config.backend.script));
  const auto result = intervene::run_sweep(config, problems, *store, mock);
  check(result.pending == 0, "sweep completed");
  const auto analysis = report::analyze(*store);

  std::string expected = "budget,accuracy_percent\n";
  for (auto b : config.budgets) {
    const auto fit = std::count_if(lengths.begin(), lengths.end(), [&](auto l) { return l <= b; });
    expected += std::to_string(b) + "," + oracle_percent(fit, static_cast<std::int64_t>(lengths.size())) + "\n";
  }
  check(analysis.scaling_curve_csv == expected, "curve differs from oracle:\n" + analysis.scaling_curve_csv);

  const auto points = analytics::accuracy_points(store->effective_records());
  for (std::size_t i = 1; i < points.size(); ++i) {
    check(points[i - 1].percent.value() <= points[i].percent.value(), "curve is nondecreasing");
  }
  const double elapsed = seconds_since(start);
  check(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s exceeds 5 s");
}

int oracle_flips(const std::vector<bool>& labels) {
  int flips = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (j - i == 1 && labels[i] != labels[j]) ++flips;
    }
  }
  return flips;
}

// Runs a scripted scale-up sweep in which problem i follows label sequence i,
// and returns the sequences the pipeline recovers.
std::map<std::string, std::vector<bool>> recovered_labels(const std::vector<std::vector<bool>>& sequences,
                                                          int wait_count) {
  std::vector<corpus::Problem> problems;
  std::vector<backend::ScriptEntry> script;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto id = "s" + std::to_string(i);
    problems.push_back({id, "Scripted problem.", "7", corpus::AnswerKind::integer_aime});
    for (std::size_t k = 0; k < sequences[i].size(); ++k) {
      const std::string answer = sequences[i][k] ? "7" : std::to_string(100 + (i + k) % 50);
      const auto text = (k == 0 ? "Initial attempt." : " Rechecking step " + std::to_string(k) + ".") +
                        std::string(" Therefore, the final answer is: \\boxed{") + answer + "}";
      script.push_back({{id, backend::CallKind::scale_up, static_cast<std::int64_t>(k), std::nullopt},
                        {text, backend::FinishReason::stop(), {}, false},
                        std::nullopt});
    }
  }
  const corpus::ProblemSet set("oscillation", std::move(problems));
  auto config = testing::scale_up_config("oscillation", wait_count, 1);
  config.model_id = "mock";
  config.ceiling_budget = 4096;
  TempDir dir;
  auto store = runstore::RunStore::open(config, set, dir.path());
  backend::MockBackend mock(std::move(script));
  intervene::run_sweep(config, set, *store, mock);
  const auto view = analytics::scale_up_view(store->effective_records(), wait_count);
  std::map<std::string, std::vector<bool>> out;
  for (const auto& seq : analytics::label_sequences(view.at(0))) out[seq.problem_id] = seq.labels;
  return out;
}

// 2. Flip counts from the scripted pipeline match the pairwise oracle; every sequence up to length 8 is enumerated.
// Sweeps need K >= 1, so single-step sequences are checked on the profile alone.
void oscillation_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  for (bool label : {false, true}) {
    check(analytics::flip_profile({"s", {label}}) == analytics::FlipProfile{0, false}, "single-step sequence");
  }
  for (int len = 2; len <= 8; ++len) {
    std::vector<std::vector<bool>> sequences;
    for (unsigned mask = 0; mask < (1u << len); ++mask) {
      std::vector<bool> labels;
      for (int i = 0; i < len; ++i) labels.push_back(((mask >> i) & 1u) != 0);
      sequences.push_back(std::move(labels));
    }
    const auto recovered = recovered_labels(sequences, len - 1);
    check(recovered.size() == sequences.size(), "one label sequence per scripted problem");
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      const auto& labels = recovered.at("s" + std::to_string(i));
      check(labels == sequences[i], "labels recovered for length " + std::to_string(len));
      const auto profile = analytics::flip_profile({"s" + std::to_string(i), labels});
      check(profile.flips == oracle_flips(sequences[i]), "flip count for length " + std::to_string(len));
      check(profile.oscillating == (oracle_flips(sequences[i]) >= 2), "oscillation flag");
    }
  }
  std::mt19937 rng(17);
  std::vector<std::vector<bool>> longer(64);
  for (auto& s : longer) {
    for (int k = 0; k < 12; ++k) s.push_back(rng() % 2 == 0);
  }
  const auto recovered = recovered_labels(longer, 11);
  for (std::size_t i = 0; i < longer.size(); ++i) {
    const auto profile = analytics::flip_profile({"", recovered.at("s" + std::to_string(i))});
    check(profile.flips == oracle_flips(longer[i]), "flip count for length 12");
  }
  const double elapsed = seconds_since(start);
  check(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s exceeds 5 s");
}

// 3. The DeepSeek-V3 fixture store renders the expected repetition row.
void table_reproduction() {
  TempDir dir;
  auto store = testing::deepseek_v3_fixture(dir.path());
  const auto analysis = report::analyze(*store, {{{"2", "nonsensical output"}}});
  check(analysis.repetition_table_csv.has_value(), "repetition table produced");
  const auto& csv = *analysis.repetition_table_csv;
  const auto row = csv.substr(csv.find('\n') + 1);
  check(row == "28.3,30.0,30.0,85.0,98.3,86.7\n", "row was " + row);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r\f\v");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r\f\v");
  return s.substr(b, e - b + 1);
}

// 4. Random record sets: library metrics equal a brute-force reference.
void metrics_oracle_equivalence() {
  std::mt19937 rng(2025);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  const std::vector<std::optional<std::string>> answer_pool{std::nullopt, "1", "2", "017", "17", "999"};
  const std::vector<std::optional<std::string>> text_pool{std::nullopt, "same", " same\n", "same.", "", "other"};
  for (int set = 0; set < 200; ++set) {
    const int problems = 1 + pick(100);
    const int steps = 1 + pick(5);
    std::vector<std::string> ids;
    for (int p = 0; p < problems; ++p) ids.push_back("p" + std::to_string(p));

    std::vector<std::vector<std::optional<std::string>>> answers(static_cast<std::size_t>(steps));
    std::vector<std::vector<std::optional<std::string>>> texts(static_cast<std::size_t>(steps));
    std::vector<TrialRecord> records;
    for (int k = 0; k < steps; ++k) {
      for (int p = 0; p < problems; ++p) {
        answers[k].push_back(answer_pool[static_cast<std::size_t>(pick(6))]);
        texts[k].push_back(text_pool[static_cast<std::size_t>(pick(6))]);
        TrialRecord r;
        r.problem_id = ids[static_cast<std::size_t>(p)];
        r.index = k;
        r.correct = pick(2) == 0;
        records.push_back(r);
      }
    }
    std::shuffle(records.begin(), records.end(), rng);

    for (const auto& point : analytics::accuracy_points(records)) {
      std::int64_t correct = 0;
      std::int64_t total = 0;
      for (const auto& r : records) {
        if (r.index != point.index) continue;
        ++total;
        correct += r.correct ? 1 : 0;
      }
      check(point.percent.format_1dp() == oracle_percent(correct, total), "accuracy_points set " + std::to_string(set));
    }

    for (int k = 1; k < steps; ++k) {
      std::vector<analytics::StepAnswer> prev;
      std::vector<analytics::StepAnswer> cur;
      std::vector<analytics::StepResponse> prev_text;
      std::vector<analytics::StepResponse> cur_text;
      std::int64_t unchanged = 0;
      std::int64_t repeated = 0;
      for (int p = 0; p < problems; ++p) {
        const auto& a = answers[k - 1][p];
        const auto& b = answers[k][p];
        if ((!a && !b) || (a && b && *a == *b)) ++unchanged;
        const auto& s = texts[k - 1][p];
        const auto& t = texts[k][p];
        if (s && t && trim(*s) == trim(*t)) ++repeated;
        prev.push_back({ids[p], a});
        cur.push_back({ids[p], b});
        prev_text.push_back({ids[p], s});
        cur_text.push_back({ids[p], t});
      }
      std::shuffle(cur.begin(), cur.end(), rng);
      std::shuffle(cur_text.begin(), cur_text.end(), rng);
      check(analytics::answer_unchanged_rate(prev, cur).format_1dp() == oracle_percent(unchanged, problems),
            "answer_unchanged_rate set " + std::to_string(set));
      check(analytics::answer_unchanged_rate(prev, cur) == analytics::Ratio::percent(unchanged, problems),
            "answer_unchanged_rate exact set " + std::to_string(set));
      check(analytics::response_repetition_rate(prev_text, cur_text).format_1dp() ==
                oracle_percent(repeated, problems),
            "response_repetition_rate set " + std::to_string(set));
      check(analytics::response_repetition_rate(prev_text, cur_text) == analytics::Ratio::percent(repeated, problems),
            "response_repetition_rate exact set " + std::to_string(set));
    }
  }
}

int run_cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "ttc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_out) *err_out = err.str();
  return code;
}

// 5. Record, replay and diff; analyzing twice yields identical bytes.
void replay_determinism() {
  TempDir dir;
  const auto run = (dir / "run").string();
  std::string err;
  for (const auto* preset : {"scale_up_toy", "scale_down_toy"}) {
    const auto config = (kPresetsDir / (std::string(preset) + ".json")).string();
    const auto run_dir = (dir / preset).string();
    check(run_cli({"run", "--config", config, "--run-dir", run_dir, "--record"}, &err) == 0, "record: " + err);
    check(run_cli({"verify", "--run", run_dir}, &err) == 0, "verify: " + err);
    check(run_cli({"analyze", "--run", run_dir, "--out", (dir / preset).string() + "-a"}, &err) == 0,
          "analyze: " + err);
    check(run_cli({"analyze", "--run", run_dir, "--out", (dir / preset).string() + "-b"}, &err) == 0,
          "analyze: " + err);
    for (const auto& entry : fs::directory_iterator(dir / (std::string(preset) + "-a"))) {
      const auto twin = dir / (std::string(preset) + "-b") / entry.path().filename();
      check(read_file(entry.path()) == read_file(twin), entry.path().filename().string() + " differs");
    }
  }
}

// 6. A 60-trial sweep interrupted after 30 resumes exactly the 30 pending keys.
void resume_correctness() {
  const auto config = load_config(kPresetsDir / "scale_down_toy.json");
  const auto problems = corpus::load_problem_set(config.problems);
  const auto grid = runstore::trial_grid(config, problems);
  check(grid.size() == 60, "grid has 60 trials");
  TempDir dir;
  std::vector<TrialKey> pending;
  {
    auto store = runstore::RunStore::open(config, problems, dir.path());
    backend::MockBackend mock(backend::load_script(config.backend.script));
    const auto first = intervene::run_sweep(config, problems, *store, mock, {30, {}});
    check(first.executed == 30, "first invocation appended 30 trials");
    pending = store->pending_trials(grid);
    check(pending.size() == 30, "30 trials pending after interruption");
  }
  auto store = runstore::RunStore::open(config, problems, dir.path());
  backend::MockBackend mock(backend::load_script(config.backend.script));
  const auto second = intervene::run_sweep(config, problems, *store, mock);
  check(second.executed == 30 && second.pending == 0, "resume executed the 30 pending trials");
  const auto lines = store->scan();
  check(lines.size() == 60, "store has 60 lines");
  std::set<TrialKey> keys;
  for (const auto& r : lines) keys.insert(r.key());
  check(keys.size() == 60, "no duplicate keys");
  const std::set<TrialKey> resumed(pending.begin(), pending.end());
  std::set<TrialKey> appended;
  for (std::size_t i = 30; i < lines.size(); ++i) appended.insert(lines[i].key());
  check(appended == resumed, "resumed keys equal the pending keys");
}

// 7. Request encoding and response decoding match the checked-in fixtures.
void wire_format_golden() {
  using backend::FinishReason;
  const corpus::Problem problem{"p1", "What is 2 + 3?", "5"};
  const auto initial = transcript::build_initial_conversation(problem, transcript::PromptProfile{});
  backend::GenParams basic;
  basic.max_completion_tokens = 512;
  check(backend::encode_chat_request(initial, basic, "deepseek-v3") == read_file(kFixturesDir / "req_basic.json"),
        "req_basic.json");

  const auto continued =
      transcript::append_cue(initial, "2 + 3 = 5. Therefore, the final answer is: \\boxed{5}", "Wait");
  backend::GenParams penalty;
  penalty.max_completion_tokens = 16384;
  penalty.temperature = 0.7;
  penalty.seed = 7;
  penalty.extra["frequency_penalty"] = 1.0;
  check(backend::encode_chat_request(continued, penalty, "qwen2.5-32b-instruct") ==
            read_file(kFixturesDir / "req_frequency_penalty.json"),
        "req_frequency_penalty.json");

  for (const auto* name : {"stop", "length", "content_filter", "no_usage"}) {
    const auto decoded = backend::decode_chat_response(read_file(kFixturesDir / ("resp_" + std::string(name) + ".json")));
    check(decoded.to_json().dump() == read_file(kFixturesDir / ("decoded_" + std::string(name) + ".json")),
          std::string("decoded_") + name + ".json");
  }
  check(FinishReason::from_wire("stop") == FinishReason::stop(), "stop maps to stop");
  check(FinishReason::from_wire("length") == FinishReason::length(), "length maps to length");
  check(FinishReason::from_wire("content_filter") == FinishReason::other("content_filter"),
        "unknown tag maps to other");
  check(FinishReason::other("content_filter").to_wire() == "content_filter", "unknown tag round-trips");
}

// 8. Default system prompts equal the published boxed prompts.
void prompt_fidelity() {
  const std::string solve =
      R"(Solve the following math problem efficiently and clearly. The last line of your response should be of the following format: 'Therefore, the final answer is: \boxed{{ANSWER}}' Think step by step before answering.)";
  const std::string forced =
      R"(Give the answer directly without any explanation or reasoning. Use this format: 'Therefore, the final answer is: \boxed{{ANSWER}}' For example, 'Therefore, the final answer is: \boxed{{5}}' Follow the instructions carefully.)";
  const transcript::PromptProfile profile;
  check(profile.solve_system_prompt == solve, "solve prompt");
  check(profile.forced_answer_system_prompt == forced, "forced-answer prompt");
  check(profile.cue == "Wait", "cue");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria{
      {"AC1 scale-down oracle curve", scale_down_oracle_curve},
      {"AC2 oscillation fidelity", oscillation_fidelity},
      {"AC3 table reproduction", table_reproduction},
      {"AC4 metrics oracle equivalence", metrics_oracle_equivalence},
      {"AC5 replay determinism", replay_determinism},
      {"AC6 resume correctness", resume_correctness},
      {"AC7 wire-format golden", wire_format_golden},
      {"AC8 prompt fidelity", prompt_fidelity},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    try {
      run();
      std::cout << "PASS " << name << "\n";
    } catch (const Failure& f) {
      ++failed;
      std::cout << "FAIL " << name << ": " << f.what << "\n";
    } catch (const std::exception& e) {
      ++failed;
      std::cout << "FAIL " << name << ": exception: " << e.what() << "\n";
    }
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
