#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ttc/corpus.hpp"

namespace ttc::transcript {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct Message {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

// Where the budget-truncated reasoning goes in the forced-answer request.
// Some endpoints reject a trailing assistant turn, hence the user-embedded
// fallback.
enum class ForcedLayout { assistant_continuation, user_embedded };

std::string_view to_string(ForcedLayout layout);
ForcedLayout forced_layout_from_string(std::string_view text);

inline constexpr std::string_view kSolveSystemPrompt =
    "Solve the following math problem efficiently and clearly. The last line of your response "
    "should be of the following format: 'Therefore, the final answer is: \\boxed{{ANSWER}}' "
    "Think step by step before answering.";

inline constexpr std::string_view kForcedAnswerSystemPrompt =
    "Give the answer directly without any explanation or reasoning. Use this format: "
    "'Therefore, the final answer is: \\boxed{{ANSWER}}' For example, 'Therefore, the final "
    "answer is: \\boxed{{5}}' Follow the instructions carefully.";

inline constexpr std::string_view kDefaultCue = "Wait";

inline constexpr std::string_view kPartialReasoningSeparator = "\n\nPartial reasoning so far:\n";

struct PromptProfile {
  std::string solve_system_prompt{kSolveSystemPrompt};
  std::string forced_answer_system_prompt{kForcedAnswerSystemPrompt};
  std::string cue{kDefaultCue};
  ForcedLayout forced_layout = ForcedLayout::assistant_continuation;

  // Throws ValidationError when a prompt or the cue is empty.
  void validate() const;

  friend bool operator==(const PromptProfile&, const PromptProfile&) = default;
};

/// Ordered chat turns. Invariants (checked by validate()):
///  - the first message is a non-empty system message;
///  - after it, roles alternate user/assistant starting with user;
///  - system and user content is never empty.
class Conversation {
 public:
  Conversation() = default;
  explicit Conversation(std::vector<Message> messages);

  const std::vector<Message>& messages() const noexcept { return messages_; }
  std::size_t size() const noexcept { return messages_.size(); }
  bool empty() const noexcept { return messages_.empty(); }
  bool ends_with_assistant() const noexcept {
    return !messages_.empty() && messages_.back().role == Role::assistant;
  }

  void validate() const;

  friend bool operator==(const Conversation&, const Conversation&) = default;

 private:
  std::vector<Message> messages_;
};

/// [system(solve prompt), user(statement)].
Conversation build_initial_conversation(const corpus::Problem& problem, const PromptProfile& profile);

/// Returns a copy of `conversation` whose final message is an assistant turn
/// holding `accumulated_assistant_text + "\n" + cue`. If the conversation
/// already ends in an assistant turn, that turn is replaced, and
/// `accumulated_assistant_text` must extend its content.
Conversation append_cue(const Conversation& conversation, std::string_view accumulated_assistant_text,
                        std::string_view cue);

Conversation build_forced_answer_conversation(const corpus::Problem& problem, std::string_view truncated_reasoning,
                                              const PromptProfile& profile);

}  // namespace ttc::transcript
