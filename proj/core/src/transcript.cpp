#include "ttc/transcript.hpp"

#include "strings.hpp"
#include "ttc/error.hpp"

namespace ttc::transcript {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  throw ValidationError("unknown role \"" + std::string(text) + "\"");
}

std::string_view to_string(ForcedLayout layout) {
  switch (layout) {
    case ForcedLayout::assistant_continuation:
      return "assistant-continuation";
    case ForcedLayout::user_embedded:
      return "user-embedded";
  }
  return "assistant-continuation";
}

ForcedLayout forced_layout_from_string(std::string_view text) {
  if (text == "assistant-continuation") return ForcedLayout::assistant_continuation;
  if (text == "user-embedded") return ForcedLayout::user_embedded;
  throw ValidationError("unknown forced_layout \"" + std::string(text) + "\"");
}

void PromptProfile::validate() const {
  if (solve_system_prompt.empty()) throw ValidationError("prompt profile: solve_system_prompt is empty");
  if (forced_answer_system_prompt.empty()) {
    throw ValidationError("prompt profile: forced_answer_system_prompt is empty");
  }
  if (cue.empty()) throw ValidationError("prompt profile: cue is empty");
}

Conversation::Conversation(std::vector<Message> messages) : messages_(std::move(messages)) { validate(); }

void Conversation::validate() const {
  if (messages_.empty()) throw ValidationError("conversation is empty");
  if (messages_.front().role != Role::system) throw ValidationError("conversation must start with a system message");
  for (std::size_t i = 0; i < messages_.size(); ++i) {
    const auto& m = messages_[i];
    if (i > 0) {
      const Role expected = (i % 2 == 1) ? Role::user : Role::assistant;
      if (m.role != expected) {
        throw ValidationError("conversation message " + std::to_string(i) + " has role " +
                              std::string(to_string(m.role)) + ", expected " + std::string(to_string(expected)));
      }
    }
    if (m.role != Role::assistant && m.content.empty()) {
      throw ValidationError("conversation message " + std::to_string(i) + " (" + std::string(to_string(m.role)) +
                            ") has empty content");
    }
  }
}

Conversation build_initial_conversation(const corpus::Problem& problem, const PromptProfile& profile) {
  profile.validate();
  if (detail::trim(problem.statement).empty()) {
    throw ValidationError("problem \"" + problem.id + "\" has an empty statement");
  }
  return Conversation({{Role::system, profile.solve_system_prompt}, {Role::user, problem.statement}});
}

Conversation append_cue(const Conversation& conversation, std::string_view accumulated_assistant_text,
                        std::string_view cue) {
  conversation.validate();
  if (accumulated_assistant_text.empty()) {
    throw ValidationError("append_cue: accumulated assistant text is empty");
  }
  if (cue.empty()) throw ValidationError("append_cue: cue is empty");

  std::vector<Message> messages = conversation.messages();
  std::string content;
  content.reserve(accumulated_assistant_text.size() + 1 + cue.size());
  content.append(accumulated_assistant_text).append("\n").append(cue);

  if (conversation.ends_with_assistant()) {
    const auto& previous = messages.back().content;
    if (accumulated_assistant_text.substr(0, previous.size()) != previous) {
      throw ValidationError("append_cue: accumulated text does not extend the existing assistant turn");
    }
    messages.back().content = std::move(content);
  } else {
    messages.push_back({Role::assistant, std::move(content)});
  }
  return Conversation(std::move(messages));
}

Conversation build_forced_answer_conversation(const corpus::Problem& problem, std::string_view truncated_reasoning,
                                              const PromptProfile& profile) {
  profile.validate();
  if (truncated_reasoning.empty()) throw ValidationError("forced answer: truncated reasoning is empty");
  if (detail::trim(problem.statement).empty()) {
    throw ValidationError("problem \"" + problem.id + "\" has an empty statement");
  }
  if (profile.forced_layout == ForcedLayout::assistant_continuation) {
    return Conversation({{Role::system, profile.forced_answer_system_prompt},
                         {Role::user, problem.statement},
                         {Role::assistant, std::string(truncated_reasoning)}});
  }
  std::string user = problem.statement;
  user.append(kPartialReasoningSeparator).append(truncated_reasoning);
  return Conversation({{Role::system, profile.forced_answer_system_prompt}, {Role::user, std::move(user)}});
}

}  // namespace ttc::transcript
