#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ttc::corpus {

enum class AnswerKind { integer_aime, free_text };

std::string_view to_string(AnswerKind kind);
AnswerKind answer_kind_from_string(std::string_view text);

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;  // canonical form
  AnswerKind answer_kind = AnswerKind::integer_aime;

  friend bool operator==(const Problem&, const Problem&) = default;
};

// Immutable after construction; the constructor enforces non-empty and
// unique ids.
class ProblemSet {
 public:
  ProblemSet(std::string name, std::vector<Problem> problems);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Problem>& problems() const noexcept { return problems_; }
  std::size_t size() const noexcept { return problems_.size(); }

  // Throws ValidationError if `id` is unknown.
  const Problem& at(std::string_view id) const;
  bool contains(std::string_view id) const;

  friend bool operator==(const ProblemSet&, const ProblemSet&) = default;

 private:
  std::string name_;
  std::vector<Problem> problems_;
};

/// Canonical answer string for `raw`.
///
/// integer-aime: surrounding whitespace and leading zeros removed, value must
/// be an integer in [0, 999]. free-text: whitespace-trimmed only.
/// Throws ValidationError on empty input or an invalid integer answer.
std::string canonicalize_gold(std::string_view raw, AnswerKind kind);

/// Loads a line-delimited JSON problem file. Blank lines are skipped; the set
/// name defaults to the file stem.
ProblemSet load_problem_set(const std::filesystem::path& path);
ProblemSet parse_problem_set(std::istream& in, std::string name);

std::string serialize_problem_set(const ProblemSet& set);

}  // namespace ttc::corpus
