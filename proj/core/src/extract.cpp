#include "ttc/extract.hpp"

#include <vector>

#include "strings.hpp"

namespace ttc::extract {
namespace {

constexpr std::string_view kBoxed = "\\boxed{";

// Peels "{...}" and "\text{...}" layers that enclose the whole (trimmed) span.
// Brace partners are matched once up front so deep nesting stays linear.
std::string_view strip_wrappers(std::string_view s) {
  constexpr std::size_t npos = std::string_view::npos;
  std::vector<std::size_t> partner(s.size(), npos);
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') {
      open.push_back(i);
    } else if (s[i] == '}' && !open.empty()) {
      partner[open.back()] = i;
      open.pop_back();
    }
  }

  std::size_t begin = 0;
  std::size_t end = s.size();
  for (;;) {
    while (begin < end && detail::is_space(s[begin])) ++begin;
    while (end > begin && detail::is_space(s[end - 1])) --end;
    const auto view = s.substr(begin, end - begin);
    if (view.starts_with("\\text{") && partner[begin + 5] == end - 1) {
      begin += 6;
      --end;
    } else if (view.size() >= 2 && view.front() == '{' && partner[begin] == end - 1) {
      ++begin;
      --end;
    } else {
      return view;
    }
  }
}

}  // namespace

std::string canonicalize_answer(std::string_view raw, corpus::AnswerKind kind) {
  if (kind == corpus::AnswerKind::free_text) return std::string(detail::trim(raw));

  const auto inner = strip_wrappers(raw);
  std::string compact;
  compact.reserve(inner.size());
  for (char c : inner) {
    if (c == ',' || detail::is_space(c)) continue;
    compact.push_back(c);
  }
  bool digits = !compact.empty();
  for (char c : compact) digits = digits && c >= '0' && c <= '9';
  if (!digits) return std::string(inner);

  std::string_view value = compact;
  while (value.size() > 1 && value.front() == '0') value.remove_prefix(1);
  if (value.size() > 3) return std::string(inner);
  return std::string(value);
}

std::optional<Extraction> extract_boxed(std::string_view text, corpus::AnswerKind kind) {
  struct Open {
    std::size_t macro;  // offset of '\' for boxed opens
    bool boxed;
  };
  std::vector<Open> stack;
  std::optional<std::pair<std::size_t, std::size_t>> best;  // (macro offset, closing brace offset)

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && text.substr(i, kBoxed.size()) == kBoxed) {
      const std::size_t brace = i + kBoxed.size() - 1;
      stack.push_back({i, true});
      i = brace;
    } else if (c == '{') {
      stack.push_back({i, false});
    } else if (c == '}') {
      if (stack.empty()) continue;
      const Open open = stack.back();
      stack.pop_back();
      // Pops happen in closing order, so the last boxed pop closes last.
      if (open.boxed) best = std::pair{open.macro, i};
    }
  }
  if (!best) return std::nullopt;

  const std::size_t start = best->first;
  const std::size_t content_begin = start + kBoxed.size();
  Extraction e;
  e.position = start;
  e.raw_span = std::string(text.substr(content_begin, best->second - content_begin));
  e.canonical = canonicalize_answer(e.raw_span, kind);
  return e;
}

bool grade(const std::optional<Extraction>& extraction, std::string_view gold, corpus::AnswerKind kind) {
  if (!extraction) return false;
  return extraction->canonical == canonicalize_answer(gold, kind);
}

bool has_final_answer_sentence(std::string_view text) {
  return text.find(kFinalAnswerSentence) != std::string_view::npos;
}

}  // namespace ttc::extract
