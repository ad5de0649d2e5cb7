#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "ttc/corpus.hpp"

namespace ttc::extract {

struct Extraction {
  std::string raw_span;   // text between the braces of \boxed{...}
  std::string canonical;  // normalized like a gold answer
  std::size_t position = 0;  // offset of the backslash in the source text

  friend bool operator==(const Extraction&, const Extraction&) = default;
};

/// Normalizes a model-produced answer. Unlike corpus::canonicalize_gold this
/// never throws: an integer-aime span that does not reduce to an integer in
/// [0, 999] comes back as its stripped text, which can never equal a valid
/// gold answer.
std::string canonicalize_answer(std::string_view raw, corpus::AnswerKind kind);

/// The last complete \boxed{...} in `text`, matching nested braces. "Last"
/// means the occurrence whose closing brace comes last, so an outer box
/// wins over a box nested inside it. Returns nullopt when there is no
/// occurrence whose braces close before the end of the text.
std::optional<Extraction> extract_boxed(std::string_view text,
                                        corpus::AnswerKind kind = corpus::AnswerKind::integer_aime);

/// True iff an answer was extracted and its canonical form equals `gold`.
bool grade(const std::optional<Extraction>& extraction, std::string_view gold, corpus::AnswerKind kind);

inline constexpr std::string_view kFinalAnswerSentence = "Therefore, the final answer is:";

// Logged as a format-compliance flag; grading never requires it.
bool has_final_answer_sentence(std::string_view text);

}  // namespace ttc::extract
