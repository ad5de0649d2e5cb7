#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"
#include "ttc/error.hpp"
#include "ttc/intervene.hpp"
#include "ttc/runstore.hpp"

namespace {

using ttc::SweepConfig;
using ttc::TrialKey;
using ttc::TrialKind;
using ttc::TrialRecord;
using ttc::TrialStatus;
using ttc::runstore::RunStore;
using ttc::testing::kDataDir;
using ttc::testing::read_file;
using ttc::testing::TempDir;
using ttc::testing::write_file;

ttc::corpus::ProblemSet toy() { return ttc::corpus::load_problem_set(kDataDir / "toy20.jsonl"); }

SweepConfig config() {
  SweepConfig c;
  c.name = "store";
  c.model_id = "mock";
  c.problems = kDataDir / "toy20.jsonl";
  c.backend.script = kDataDir / "toy20_scale_down_script.jsonl";
  c.budgets = {256, 512, 1024};
  return c;
}

TrialRecord record(const std::string& problem, std::int64_t budget, TrialStatus status = TrialStatus::ok,
                   int run = 0) {
  TrialRecord r;
  r.run_id = "store-r" + std::to_string(run);
  r.run_index = run;
  r.problem_id = problem;
  r.kind = TrialKind::scale_down;
  r.index = budget;
  r.text = "text for " + problem;
  r.status = status;
  r.ts = ttc::now_iso8601();
  return r;
}

TEST(RunStore, FreshOpenHasEmptyManifest) {
  TempDir dir;
  auto store = RunStore::open(config(), toy(), dir / "run");
  const auto m = store->manifest();
  EXPECT_EQ(m.run_id, "store");
  EXPECT_EQ(m.completed, 0);
  EXPECT_EQ(m.config_digest, ttc::config_digest(config(), toy()));
  EXPECT_TRUE(m.valid);
  ASSERT_EQ(m.runs.size(), 1u);
  EXPECT_EQ(m.runs[0].run_id, "store-r0");
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / ttc::runstore::kManifestFile));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / ttc::runstore::kConfigFile));
  EXPECT_EQ(store->pending_trials(ttc::runstore::trial_grid(config(), toy())).size(), 60u);
}

TEST(RunStore, ReopenSameConfigResumes) {
  TempDir dir;
  std::string digest;
  {
    auto store = RunStore::open(config(), toy(), dir.path());
    digest = store->manifest().config_digest;
    store->append_trial(record("toy-01", 256));
  }
  auto store = RunStore::open(config(), toy(), dir.path());
  EXPECT_EQ(store->manifest().config_digest, digest);
  EXPECT_EQ(store->scan().size(), 1u);
}

TEST(RunStore, ReopenWithEditedBudgetsRefused) {
  TempDir dir;
  RunStore::open(config(), toy(), dir.path());
  auto edited = config();
  edited.budgets = {256, 512, 2048};
  try {
    RunStore::open(edited, toy(), dir.path());
    FAIL();
  } catch (const ttc::DigestMismatchError& e) {
    EXPECT_EQ(e.stored(), ttc::config_digest(config(), toy()));
    EXPECT_EQ(e.requested(), ttc::config_digest(edited, toy()));
    EXPECT_NE(std::string(e.what()).find(e.stored()), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(e.requested()), std::string::npos);
  }
}

TEST(RunStore, AppendThenScanAndDuplicateRejected) {
  TempDir dir;
  auto store = RunStore::open(config(), toy(), dir.path());
  const auto r = record("toy-01", 256);
  store->append_trial(r);
  const auto lines = store->scan();
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_TRUE(lines[0].same_outcome(r));
  EXPECT_THROW(store->append_trial(r), ttc::StoreError);
  EXPECT_EQ(store->scan().size(), 1u);
}

TEST(RunStore, FailedAttemptCanBeSuperseded) {
  TempDir dir;
  auto store = RunStore::open(config(), toy(), dir.path());
  store->append_trial(record("toy-01", 256, TrialStatus::failed));
  store->append_trial(record("toy-01", 256, TrialStatus::failed));
  store->append_trial(record("toy-01", 256, TrialStatus::ok));
  EXPECT_THROW(store->append_trial(record("toy-01", 256, TrialStatus::failed)), ttc::StoreError);
  EXPECT_EQ(store->scan().size(), 3u);
  const auto effective = store->effective_records();
  ASSERT_EQ(effective.size(), 1u);
  EXPECT_EQ(effective[0].status, TrialStatus::ok);
}

TEST(RunStore, PendingExcludesSettledKeepsFailed) {
  TempDir dir;
  auto store = RunStore::open(config(), toy(), dir.path());
  const auto grid = ttc::runstore::trial_grid(config(), toy());
  store->append_trial(record("toy-01", 256, TrialStatus::ok));
  store->append_trial(record("toy-01", 512, TrialStatus::failed));
  store->append_trial(record("toy-01", 1024, TrialStatus::terminal_error));
  const auto pending = store->pending_trials(grid);
  EXPECT_EQ(pending.size(), 58u);
  const std::set<TrialKey> set(pending.begin(), pending.end());
  EXPECT_TRUE(set.contains(TrialKey{0, "toy-01", TrialKind::scale_down, 512}));
  EXPECT_FALSE(set.contains(TrialKey{0, "toy-01", TrialKind::scale_down, 256}));
  EXPECT_FALSE(set.contains(TrialKey{0, "toy-01", TrialKind::scale_down, 1024}));
}

TEST(RunStore, ClosedWaitLoopHasNoPendingTail) {
  TempDir dir;
  auto c = config();
  c.intervention = ttc::Intervention::scale_up;
  c.budgets.clear();
  c.wait_count = 3;
  c.ceiling_budget = 100;
  auto store = RunStore::open(c, toy(), dir.path());
  const auto grid = ttc::runstore::trial_grid(c, toy());
  EXPECT_EQ(grid.size(), 80u);
  auto step = [&](std::int64_t k, TrialStatus s) {
    auto r = record("toy-01", 0, s);
    r.kind = TrialKind::scale_up;
    r.index = k;
    store->append_trial(r);
  };
  step(0, TrialStatus::ok);
  step(1, TrialStatus::budget_exhausted);
  const auto pending = store->pending_trials(grid);
  EXPECT_EQ(pending.size(), 76u);
  for (const auto& k : pending) EXPECT_NE(k.problem_id, "toy-01");
}

TEST(RunStore, GridOrder) {
  auto c = config();
  c.runs = 2;
  const auto grid = ttc::runstore::trial_grid(c, toy());
  ASSERT_EQ(grid.size(), 120u);
  EXPECT_EQ(grid[0], (TrialKey{0, "toy-01", TrialKind::scale_down, 256}));
  EXPECT_EQ(grid[1], (TrialKey{0, "toy-01", TrialKind::scale_down, 512}));
  EXPECT_EQ(grid[3], (TrialKey{0, "toy-02", TrialKind::scale_down, 256}));
  EXPECT_EQ(grid[60], (TrialKey{1, "toy-01", TrialKind::scale_down, 256}));
}

TEST(RunStore, PartialTrailingLineIsDropped) {
  TempDir dir;
  {
    auto store = RunStore::open(config(), toy(), dir.path());
    store->append_trial(record("toy-01", 256));
    store->append_trial(record("toy-02", 256));
  }
  const auto path = dir / ttc::runstore::kTrialsFile;
  const auto full = read_file(path);
  write_file(path, full + R"({"run_id":"store-r0","problem_id":"toy-03","ki)");
  auto store = RunStore::open(config(), toy(), dir.path());
  EXPECT_EQ(store->scan().size(), 2u);
  EXPECT_EQ(read_file(path), full);
  store->append_trial(record("toy-03", 256));
  EXPECT_EQ(RunStore::open_existing(dir.path())->scan().size(), 3u);
}

TEST(RunStore, CorruptCompleteLineIsAnError) {
  TempDir dir;
  RunStore::open(config(), toy(), dir.path());
  write_file(dir / ttc::runstore::kTrialsFile, "{broken}\n");
  EXPECT_THROW(RunStore::open(config(), toy(), dir.path()), ttc::StoreError);
}

TEST(RunStore, CrashSafetyAtEveryLineBoundary) {
  TempDir source;
  const auto c = config();
  const auto problems = toy();
  {
    auto store = RunStore::open(c, problems, source.path());
    ttc::backend::MockBackend mock(ttc::backend::load_script(c.backend.script));
    ttc::intervene::run_sweep(c, problems, *store, mock);
  }
  const auto content = read_file(source / ttc::runstore::kTrialsFile);
  const auto grid = ttc::runstore::trial_grid(c, problems);
  std::vector<TrialKey> written;
  for (const auto& r : RunStore::open_existing(source.path())->scan()) written.push_back(r.key());
  ASSERT_EQ(written.size(), 60u);

  std::size_t lines = 0;
  for (std::size_t cut = 0; cut <= content.size(); ++cut) {
    if (cut != 0 && content[cut - 1] != '\n') continue;
    TempDir copy;
    std::filesystem::copy(source.path(), copy.path(), std::filesystem::copy_options::recursive |
                                                          std::filesystem::copy_options::overwrite_existing);
    write_file(copy / ttc::runstore::kTrialsFile, content.substr(0, cut));
    auto store = RunStore::open(c, problems, copy.path());
    const std::set<TrialKey> survivors(written.begin(), written.begin() + static_cast<long>(lines));
    std::vector<TrialKey> expected;
    for (const auto& k : grid) {
      if (!survivors.contains(k)) expected.push_back(k);
    }
    EXPECT_EQ(store->pending_trials(grid), expected) << "cut after " << lines << " lines";
    ++lines;
  }
  EXPECT_EQ(lines, 61u);
}

TEST(RunStore, ScanIsDeterministic) {
  TempDir dir;
  auto store = RunStore::open(config(), toy(), dir.path());
  for (const auto* id : {"toy-03", "toy-01", "toy-02"}) store->append_trial(record(id, 512));
  std::vector<std::string> ids;
  for (const auto& r : store->scan()) ids.push_back(r.problem_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"toy-03", "toy-01", "toy-02"}));
  const auto again = RunStore::open_existing(dir.path())->scan();
  ASSERT_EQ(again.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(again[i].same_outcome(store->scan()[i]));
}

TEST(RunStore, ExcludeRunByIdOrIndex) {
  TempDir dir;
  auto c = config();
  c.runs = 3;
  auto store = RunStore::open(c, toy(), dir.path());
  store->exclude_run("store-r1", "nonsensical output");
  store->exclude_run("2", "second reason");
  const auto m = RunStore::open_existing(dir.path())->manifest();
  EXPECT_TRUE(m.runs[0].valid);
  EXPECT_FALSE(m.runs[1].valid);
  EXPECT_EQ(m.runs[1].exclusion_reason, "nonsensical output");
  EXPECT_FALSE(m.runs[2].valid);
  EXPECT_THROW(store->exclude_run("store-r9", "x"), ttc::ValidationError);
  EXPECT_THROW(store->exclude_run("store-r0", ""), ttc::Error);
}

TEST(RunStore, OpenExistingRequiresManifest) {
  TempDir dir;
  EXPECT_THROW(RunStore::open_existing(dir / "nothing"), ttc::StoreError);
}

TEST(TrialRecord, JsonRoundTripBothKinds) {
  auto down = record("toy-01", 256);
  down.truncated = true;
  down.forced_answer_text = "\\boxed{1}";
  down.forced_finish_reason = ttc::backend::FinishReason::stop();
  down.extracted_answer = "1";
  down.finish_reason = ttc::backend::FinishReason::length();
  down.usage = {10, 256};
  down.error = "none";
  const auto j = down.to_json();
  EXPECT_EQ(j.at("budget"), 256);
  EXPECT_FALSE(j.contains("step_index"));
  EXPECT_TRUE(TrialRecord::from_json(j).same_outcome(down));

  auto up = record("toy-01", 0);
  up.kind = TrialKind::scale_up;
  up.index = 2;
  up.cumulative_text = "a\nWait b";
  up.continuation_answer = "4";
  up.status = TrialStatus::budget_exhausted;
  const auto uj = up.to_json();
  EXPECT_EQ(uj.at("step_index"), 2);
  EXPECT_EQ(uj.at("status"), "budget_exhausted");
  EXPECT_TRUE(TrialRecord::from_json(uj).same_outcome(up));

  for (const char* field : {"run_id", "problem_id", "kind", "params", "text", "finish_reason", "usage",
                            "extracted_answer", "correct", "status", "ts"}) {
    EXPECT_TRUE(j.contains(field)) << field;
  }
}

TEST(TrialRecord, SameOutcomeIgnoresOnlyTimestamp) {
  auto a = record("toy-01", 256);
  auto b = a;
  b.ts = "2000-01-01T00:00:00.000Z";
  EXPECT_TRUE(a.same_outcome(b));
  b.text += "!";
  EXPECT_FALSE(a.same_outcome(b));
}

}  // namespace
