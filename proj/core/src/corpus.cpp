#include "ttc/corpus.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "strings.hpp"
#include "ttc/error.hpp"

namespace ttc::corpus {

using nlohmann::ordered_json;

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::integer_aime:
      return "integer-aime";
    case AnswerKind::free_text:
      return "free-text";
  }
  return "integer-aime";
}

AnswerKind answer_kind_from_string(std::string_view text) {
  if (text == "integer-aime") return AnswerKind::integer_aime;
  if (text == "free-text") return AnswerKind::free_text;
  throw ValidationError("unknown answer_kind \"" + std::string(text) + "\"");
}

ProblemSet::ProblemSet(std::string name, std::vector<Problem> problems)
    : name_(std::move(name)), problems_(std::move(problems)) {
  if (problems_.empty()) throw ValidationError("problem set \"" + name_ + "\" is empty");
  std::unordered_map<std::string_view, std::size_t> seen;
  for (std::size_t i = 0; i < problems_.size(); ++i) {
    const auto& p = problems_[i];
    if (p.id.empty()) throw ValidationError("problem #" + std::to_string(i + 1) + " has an empty id");
    if (!seen.emplace(p.id, i).second) throw ValidationError("duplicate problem id \"" + p.id + "\"");
  }
}

const Problem& ProblemSet::at(std::string_view id) const {
  for (const auto& p : problems_) {
    if (p.id == id) return p;
  }
  throw ValidationError("unknown problem id \"" + std::string(id) + "\"");
}

bool ProblemSet::contains(std::string_view id) const {
  for (const auto& p : problems_) {
    if (p.id == id) return true;
  }
  return false;
}

std::string canonicalize_gold(std::string_view raw, AnswerKind kind) {
  const auto trimmed = detail::trim(raw);
  if (trimmed.empty()) throw ValidationError("answer is empty");
  if (kind == AnswerKind::free_text) return std::string(trimmed);

  for (char c : trimmed) {
    if (c < '0' || c > '9') {
      throw ValidationError("integer-aime answer \"" + std::string(trimmed) + "\" is not a non-negative integer");
    }
  }
  auto digits = trimmed;
  while (digits.size() > 1 && digits.front() == '0') digits.remove_prefix(1);
  if (digits.size() > 3) {
    throw ValidationError("integer-aime answer \"" + std::string(trimmed) + "\" is out of range [0, 999]");
  }
  return std::string(digits);
}

namespace {

const ordered_json& require_string(const ordered_json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ValidationError("line " + std::to_string(line) + ": missing or non-string field \"" + key + "\"");
  }
  return *it;
}

}  // namespace

ProblemSet parse_problem_set(std::istream& in, std::string name) {
  std::vector<Problem> problems;
  std::unordered_map<std::string, std::size_t> first_line;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (detail::trim(text).empty()) continue;
    ordered_json obj;
    try {
      obj = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError("line " + std::to_string(line_no) + ": expected a JSON object");

    Problem p;
    p.id = require_string(obj, "id", line_no).get<std::string>();
    p.statement = require_string(obj, "statement", line_no).get<std::string>();
    const auto kind_text = require_string(obj, "answer_kind", line_no).get<std::string>();
    const auto gold = require_string(obj, "gold_answer", line_no).get<std::string>();
    try {
      p.answer_kind = answer_kind_from_string(kind_text);
      p.gold_answer = canonicalize_gold(gold, p.answer_kind);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (p.id.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty id");
    if (detail::trim(p.statement).empty()) {
      throw ValidationError("line " + std::to_string(line_no) + ": empty statement for \"" + p.id + "\"");
    }
    auto [it, inserted] = first_line.emplace(p.id, line_no);
    if (!inserted) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate id \"" + p.id +
                            "\" (first seen on line " + std::to_string(it->second) + ")");
    }
    problems.push_back(std::move(p));
  }
  if (problems.empty()) throw ValidationError("problem file \"" + name + "\" contains no problems");
  return ProblemSet(std::move(name), std::move(problems));
}

ProblemSet load_problem_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open problem file " + path.string());
  return parse_problem_set(in, path.stem().string());
}

std::string serialize_problem_set(const ProblemSet& set) {
  std::ostringstream out;
  for (const auto& p : set.problems()) {
    ordered_json obj;
    obj["id"] = p.id;
    obj["statement"] = p.statement;
    obj["gold_answer"] = p.gold_answer;
    obj["answer_kind"] = to_string(p.answer_kind);
    out << obj.dump() << '\n';
  }
  return out.str();
}

}  // namespace ttc::corpus
